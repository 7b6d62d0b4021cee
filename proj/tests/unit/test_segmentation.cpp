#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mrt/segmentation.hpp"

using namespace mrt;

namespace {

using Bounds = std::vector<EpisodeBoundary>;

// Builds a step list where the 1-based positions in `marked` open with "Wait".
std::vector<std::string> steps_with_markers(std::size_t n, const std::vector<std::size_t>& marked,
                                            const std::string& phrase = "Wait") {
  std::vector<std::string> steps;
  for (std::size_t i = 1; i <= n; ++i) {
    const bool m = std::find(marked.begin(), marked.end(), i) != marked.end();
    steps.push_back(m ? phrase + ", step " + std::to_string(i) : "step " + std::to_string(i));
  }
  return steps;
}

Bounds unit_episodes(std::size_t n) {
  Bounds b;
  for (std::size_t i = 0; i < n; ++i) b.push_back({i, i + 1});
  return b;
}

void check_partition(const Bounds& b, std::size_t n, std::size_t min_steps) {
  REQUIRE_FALSE(b.empty());
  CHECK(b.front().start_step == 0);
  CHECK(b.back().end_step == n);
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    CHECK(b[i].end_step == b[i + 1].start_step);
    CHECK(b[i].size() >= min_steps);
  }
}

}  // namespace

TEST_CASE("golden: short-episode marker is suppressed") {
  const auto steps = steps_with_markers(7, {4, 6});
  CHECK(segment_episodes(steps, default_markers(), 3) == Bounds{{0, 3}, {3, 7}});
}

TEST_CASE("golden: no marker gives one episode") {
  CHECK(segment_episodes(steps_with_markers(5, {}), default_markers(), 3) == Bounds{{0, 5}});
}

TEST_CASE("golden: min_steps 1 with markers everywhere splits every step") {
  const auto steps = steps_with_markers(4, {1, 2, 3, 4});
  CHECK(segment_episodes(steps, default_markers(), 1) == Bounds{{0, 1}, {1, 2}, {2, 3}, {3, 4}});
}

TEST_CASE("golden: marker on the first step does not open an empty episode") {
  const auto steps = steps_with_markers(6, {1, 4});
  CHECK(segment_episodes(steps, default_markers(), 3) == Bounds{{0, 3}, {3, 6}});
}

TEST_CASE("golden: short final episode is kept") {
  const auto steps = steps_with_markers(7, {4, 7});
  CHECK(segment_episodes(steps, default_markers(), 3) == Bounds{{0, 3}, {3, 6}, {6, 7}});
}

TEST_CASE("golden: empty marker list keeps the whole stream") {
  const auto steps = steps_with_markers(5, {2, 4});
  CHECK(segment_episodes(steps, {}, 1) == Bounds{{0, 5}});
}

TEST_CASE("golden: matching is case sensitive and step initial") {
  std::vector<std::string> steps = {"a", "b", "c", "wait, lowercase", "d", "e", "so Wait inside", "f"};
  CHECK(segment_episodes(steps, default_markers(), 3) == Bounds{{0, 8}});
}

TEST_CASE("golden: leading whitespace is ignored and every default phrase splits") {
  std::vector<std::string> steps;
  for (const auto& m : default_markers()) {
    steps.push_back("  \t" + m + " then");
    steps.push_back("work");
  }
  Bounds expected;
  for (std::size_t i = 0; i < default_markers().size(); ++i) expected.push_back({2 * i, 2 * i + 2});
  CHECK(segment_episodes(steps, default_markers(), 2) == expected);
}

TEST_CASE("golden: consecutive markers collapse until min_steps is met") {
  const auto steps = steps_with_markers(9, {2, 3, 4, 5, 6, 7, 8, 9}, "Alternatively");
  CHECK(segment_episodes(steps, default_markers(), 4) == Bounds{{0, 4}, {4, 8}, {8, 9}});
}

TEST_CASE("golden: longer phrases and mixed markers") {
  std::vector<std::string> steps = {"s1", "s2", "But let me double-check this", "s4",
                                    "Is there another way to think about this? yes", "s6", "s7",
                                    "But hold on", "s9", "s10"};
  CHECK(segment_episodes(steps, default_markers(), 2) == Bounds{{0, 2}, {2, 4}, {4, 7}, {7, 10}});
}

TEST_CASE("segmentation partitions random streams and tolerates trailing whitespace") {
  for (std::size_t n = 1; n < 40; ++n)
    for (std::size_t min_steps = 1; min_steps <= 4; ++min_steps) {
      std::vector<std::size_t> marked;
      for (std::size_t i = 1; i <= n; ++i)
        if ((i * 7 + n) % 3 == 0) marked.push_back(i);
      auto steps = steps_with_markers(n, marked);
      const Bounds b = segment_episodes(steps, default_markers(), min_steps);
      check_partition(b, n, min_steps);
      for (auto& s : steps) s += "  \n";
      CHECK(segment_episodes(steps, default_markers(), min_steps) == b);
    }
}

TEST_CASE("grouping merges runs and keeps a short tail") {
  const Bounds g = group_episodes(unit_episodes(12), 5);
  REQUIRE(g.size() == 3);
  CHECK(g[0].size() == 5);
  CHECK(g[1].size() == 5);
  CHECK(g[2].size() == 2);
  CHECK(group_episodes(unit_episodes(7), 1) == unit_episodes(7));
}

TEST_CASE("grouping a 30-episode fixture with sizes 5 and 3") {
  const auto steps = steps_with_markers(90, {4, 7, 10, 13, 16, 19, 22, 25, 28, 31, 34, 37, 40, 43, 46,
                                             49, 52, 55, 58, 61, 64, 67, 70, 73, 76, 79, 82, 85, 88});
  const Bounds episodes = segment_episodes(steps, default_markers(), 3);
  REQUIRE(episodes.size() == 30);
  const Bounds by5 = group_episodes(episodes, 5);
  REQUIRE(by5.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(by5[i] == EpisodeBoundary{15 * i, 15 * i + 15});
  const Bounds by3 = group_episodes(episodes, 3);
  REQUIRE(by3.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(by3[i] == EpisodeBoundary{9 * i, 9 * i + 9});
}

TEST_CASE("split_steps uses blank lines by default") {
  CHECK(split_steps("a\n\nb\nc\n\n\n\nd") == std::vector<std::string>{"a", "b\nc", "d"});
}

TEST_CASE("ingest reports malformed lines and keeps valid records") {
  std::istringstream in(
      R"({"problem_id":"a","steps":["x","Wait y"],"final_answer":"1","correct":1})"
      "\n"
      R"({"problem_id":"b","final_answer":"2","correct":0})"
      "\n"
      R"({"problem_id":"c","steps":["z"],"final_answer":"3","correct":0,"per_step_tokens":[4]})"
      "\n"
      "not json\n"
      R"({"problem_id":"d","steps":["q"],"final_answer":"4","correct":1})"
      "\n");
  const IngestResult r = ingest_trace_stream(in, "mem");
  CHECK(r.traces.size() == 3);
  REQUIRE(r.diagnostics.size() == 2);
  CHECK(r.diagnostics[0].line == 2);
  CHECK(r.diagnostics[0].message.find("steps") != std::string::npos);
  CHECK(r.diagnostics[1].line == 4);
}

TEST_CASE("ingest fails when no record is valid") {
  std::istringstream in("{}\n[]\n");
  CHECK_THROWS_AS(ingest_trace_stream(in, "mem"), std::runtime_error);
  CHECK_THROWS_AS(parse_trace_record(R"({"problem_id":"a","steps":[],"final_answer":"","correct":0})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_trace_record(R"({"problem_id":"a","steps":["s"],"final_answer":"","correct":2})"),
                  std::invalid_argument);
}

TEST_CASE("emit then ingest is the identity") {
  RawTrace a;
  a.problem_id = "p1";
  a.steps = {"first \"quoted\"", "Wait, second\nline", "unicode \xc3\xa9"};
  a.final_answer = "42";
  a.correct = 1;
  a.per_step_tokens = std::vector<int>{3, 5, 2};
  a.prefix_answer_samples = std::vector<PrefixAnswerSamples>{{1, {{"41", 0}, {"42", 1}}}, {2, {{"42", 1}}}};
  RawTrace b;
  b.problem_id = "p2";
  b.steps = {"only"};
  b.final_answer = "x";
  const auto path = std::filesystem::temp_directory_path() / "mrt_seg_roundtrip.jsonl";
  emit_trace_file({a, b}, path);
  const IngestResult r = ingest_trace_file(path);
  CHECK(r.diagnostics.empty());
  CHECK(r.traces == std::vector<RawTrace>{a, b});
  CHECK(parse_trace_record(emit_trace_record(a)) == a);
  std::filesystem::remove(path);
}

TEST_CASE("fixture trace file ingests") {
  const IngestResult r = ingest_trace_file(std::filesystem::path(MRT_FIXTURE_DIR) / "traces.jsonl");
  CHECK(r.diagnostics.empty());
  CHECK(r.traces.size() == 3);
}
