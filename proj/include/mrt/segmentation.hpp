#pragma once

// Segmentation of externally produced reasoning traces into episodes.
//
// A trace is a list of text steps (blank-line separated in raw text). A new
// episode starts at a step whose text, after leading whitespace, begins with
// one of the marker phrases, unless the episode in progress has fewer than
// `min_steps` steps. The final episode may be shorter than `min_steps`.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mrt {

inline const std::vector<std::string>& default_markers() {
  static const std::vector<std::string> markers = {
      "Wait",
      "But wait",
      "Alternatively",
      "Is there another way to think about this?",
      "But let me double-check",
      "But hold on",
  };
  return markers;
}

struct EpisodeBoundary {
  std::size_t start_step = 0;
  std::size_t end_step = 0;  // exclusive

  std::size_t size() const { return end_step - start_step; }
  bool operator==(const EpisodeBoundary&) const = default;
};

struct AnswerSample {
  std::string text;
  int correct = 0;
  bool operator==(const AnswerSample&) const = default;
};

struct PrefixAnswerSamples {
  int prefix_episodes = 0;
  std::vector<AnswerSample> answers;
  bool operator==(const PrefixAnswerSamples&) const = default;
};

struct RawTrace {
  std::string problem_id;
  std::vector<std::string> steps;
  std::string final_answer;
  int correct = 0;
  std::optional<std::vector<int>> per_step_tokens;
  std::optional<std::vector<PrefixAnswerSamples>> prefix_answer_samples;

  bool operator==(const RawTrace&) const = default;
};

std::vector<std::string> split_steps(std::string_view text, std::string_view delimiter = "\n\n");

bool starts_with_marker(std::string_view step, const std::vector<std::string>& markers);

std::vector<EpisodeBoundary> segment_episodes(const std::vector<std::string>& steps,
                                              const std::vector<std::string>& markers,
                                              std::size_t min_steps);

// Merges consecutive episodes in runs of `group_size`; the last run may be
// shorter.
std::vector<EpisodeBoundary> group_episodes(const std::vector<EpisodeBoundary>& boundaries,
                                            std::size_t group_size);

struct IngestDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::vector<RawTrace> traces;
  std::vector<IngestDiagnostic> diagnostics;
};

// Parses one JSON record; throws std::invalid_argument naming the offending
// field.
RawTrace parse_trace_record(std::string_view json_line);
std::string emit_trace_record(const RawTrace& trace);

// Parses a line-delimited trace file. Malformed lines are reported in
// `diagnostics`; throws std::runtime_error if no record is valid.
IngestResult ingest_trace_file(const std::filesystem::path& path);
IngestResult ingest_trace_stream(std::istream& in, const std::string& source_name);
void emit_trace_file(const std::vector<RawTrace>& traces, const std::filesystem::path& path);

}  // namespace mrt
