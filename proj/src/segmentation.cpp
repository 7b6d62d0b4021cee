#include "mrt/segmentation.hpp"

#include <fstream>
#include "json.hpp"
#include <sstream>
#include <stdexcept>

namespace mrt {

using nlohmann::json;

std::vector<std::string> split_steps(std::string_view text, std::string_view delimiter) {
  std::vector<std::string> steps;
  if (delimiter.empty()) {
    steps.emplace_back(text);
    return steps;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find(delimiter, pos);
    const std::string_view piece =
        text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    if (piece.find_first_not_of(" \t\r\n") != std::string_view::npos) steps.emplace_back(piece);
    if (next == std::string_view::npos) break;
    pos = next + delimiter.size();
  }
  return steps;
}

bool starts_with_marker(std::string_view step, const std::vector<std::string>& markers) {
  const auto first = step.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return false;
  step.remove_prefix(first);
  for (const auto& m : markers)
    if (!m.empty() && step.starts_with(m)) return true;
  return false;
}

std::vector<EpisodeBoundary> segment_episodes(const std::vector<std::string>& steps,
                                              const std::vector<std::string>& markers,
                                              std::size_t min_steps) {
  if (steps.empty()) throw std::invalid_argument("cannot segment an empty step sequence");
  if (min_steps == 0) throw std::invalid_argument("min_steps must be positive");
  std::vector<EpisodeBoundary> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (i - start >= min_steps && starts_with_marker(steps[i], markers)) {
      out.push_back({start, i});
      start = i;
    }
  }
  out.push_back({start, steps.size()});
  return out;
}

std::vector<EpisodeBoundary> group_episodes(const std::vector<EpisodeBoundary>& boundaries,
                                            std::size_t group_size) {
  if (group_size == 0) throw std::invalid_argument("group_size must be at least 1");
  std::vector<EpisodeBoundary> out;
  for (std::size_t i = 0; i < boundaries.size(); i += group_size) {
    const std::size_t last = std::min(i + group_size, boundaries.size()) - 1;
    out.push_back({boundaries[i].start_step, boundaries[last].end_step});
  }
  return out;
}

namespace {

const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing field '") + field + "'");
  return *it;
}

int parse_flag(const json& v, const std::string& field) {
  if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
    throw std::invalid_argument("field '" + field + "' must be 0 or 1");
  return v.get<int>();
}

}  // namespace

RawTrace parse_trace_record(std::string_view json_line) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw std::invalid_argument("record is not a JSON object");

  RawTrace t;
  const auto& id = require(obj, "problem_id");
  if (!id.is_string()) throw std::invalid_argument("field 'problem_id' must be a string");
  t.problem_id = id.get<std::string>();

  const auto& steps = require(obj, "steps");
  if (!steps.is_array() || steps.empty())
    throw std::invalid_argument("field 'steps' must be a non-empty array of strings");
  for (const auto& s : steps) {
    if (!s.is_string()) throw std::invalid_argument("field 'steps' must contain only strings");
    t.steps.push_back(s.get<std::string>());
  }

  const auto& answer = require(obj, "final_answer");
  if (!answer.is_string()) throw std::invalid_argument("field 'final_answer' must be a string");
  t.final_answer = answer.get<std::string>();
  t.correct = parse_flag(require(obj, "correct"), "correct");

  if (auto it = obj.find("per_step_tokens"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw std::invalid_argument("field 'per_step_tokens' must be an array");
    std::vector<int> tokens;
    for (const auto& v : *it) {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw std::invalid_argument("field 'per_step_tokens' must hold nonnegative integers");
      tokens.push_back(v.get<int>());
    }
    if (tokens.size() != t.steps.size())
      throw std::invalid_argument("field 'per_step_tokens' length differs from 'steps'");
    t.per_step_tokens = std::move(tokens);
  }

  if (auto it = obj.find("prefix_answer_samples"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw std::invalid_argument("field 'prefix_answer_samples' must be an array");
    std::vector<PrefixAnswerSamples> all;
    for (const auto& entry : *it) {
      if (!entry.is_object())
        throw std::invalid_argument("field 'prefix_answer_samples' must hold objects");
      PrefixAnswerSamples ps;
      const auto& pe = require(entry, "prefix_episodes");
      if (!pe.is_number_integer() || pe.get<long long>() < 0)
        throw std::invalid_argument("field 'prefix_episodes' must be a nonnegative integer");
      ps.prefix_episodes = pe.get<int>();
      const auto& answers = require(entry, "answers");
      if (!answers.is_array()) throw std::invalid_argument("field 'answers' must be an array");
      for (const auto& a : answers) {
        if (!a.is_object()) throw std::invalid_argument("field 'answers' must hold objects");
        const auto& text = require(a, "text");
        if (!text.is_string()) throw std::invalid_argument("field 'text' must be a string");
        ps.answers.push_back({text.get<std::string>(), parse_flag(require(a, "correct"), "correct")});
      }
      all.push_back(std::move(ps));
    }
    t.prefix_answer_samples = std::move(all);
  }
  return t;
}

std::string emit_trace_record(const RawTrace& t) {
  json obj;
  obj["problem_id"] = t.problem_id;
  obj["steps"] = t.steps;
  obj["final_answer"] = t.final_answer;
  obj["correct"] = t.correct;
  if (t.per_step_tokens) obj["per_step_tokens"] = *t.per_step_tokens;
  if (t.prefix_answer_samples) {
    json arr = json::array();
    for (const auto& ps : *t.prefix_answer_samples) {
      json answers = json::array();
      for (const auto& a : ps.answers) answers.push_back({{"text", a.text}, {"correct", a.correct}});
      arr.push_back({{"prefix_episodes", ps.prefix_episodes}, {"answers", answers}});
    }
    obj["prefix_answer_samples"] = arr;
  }
  return obj.dump();
}

IngestResult ingest_trace_stream(std::istream& in, const std::string& source_name) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.traces.push_back(parse_trace_record(line));
    } catch (const std::invalid_argument& e) {
      result.diagnostics.push_back({line_no, e.what()});
    }
  }
  if (result.traces.empty()) {
    std::string msg = "no valid trace records in " + source_name;
    if (!result.diagnostics.empty())
      msg += " (line " + std::to_string(result.diagnostics.front().line) + ": " +
             result.diagnostics.front().message + ")";
    throw std::runtime_error(msg);
  }
  return result;
}

IngestResult ingest_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  return ingest_trace_stream(in, path.string());
}

void emit_trace_file(const std::vector<RawTrace>& traces, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  for (const auto& t : traces) out << emit_trace_record(t) << '\n';
}

}  // namespace mrt
