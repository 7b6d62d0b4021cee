#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mrt/cli.hpp"
#include "mrt/eval.hpp"

using namespace mrt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mrt_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

const char* kSmallRun =
    "[run]\nseed = 3\n[env]\nkind = candidate_elimination\nsize = 8\n"
    "[trainer]\niterations = 1\nsteps_per_iteration = 2\nbatch_size = 4\ngroup_size = 4\n"
    "train_problems = 20\nbudget = 100\n"
    "[eval]\nbudgets = 50,100\nextensions = 2\neval_problems = 10\n";

}  // namespace

TEST_CASE("minimal config applies and records defaults") {
  const RunConfig c = parse_config_text("[run]\nseed = 7\n[env]\nkind = candidate_elimination\n", "min.cfg");
  CHECK(c.master_seed() == 7);
  CHECK(c.env.size == 16);
  CHECK(c.rl.alpha == 1.0);
  CHECK(c.rl.group_size == 8);
  CHECK(c.eval.budgets == std::vector<int>{50, 100, 150, 200});
  CHECK(c.resolved_forcing_base() == 200);
  const std::string resolved = resolved_config(c);
  for (const char* key : {"trainer.alpha = 1", "trainer.group_size = 8", "env.size = 16", "run.seed = 7",
                          "eval.vote_counts = 1,2,4,8"})
    CHECK(resolved.find(key) != std::string::npos);
}

TEST_CASE("validation errors name the field") {
  const std::string e = config_error("[run]\nseed = 1\n[trainer]\nalpha = -1\n");
  CHECK(e.find("trainer.alpha") != std::string::npos);
  CHECK(config_error("[run]\nseed = 1\n[trainer]\ngroup_size = 1\n").find("trainer.group_size") !=
        std::string::npos);
  CHECK(config_error("[run]\nseed = 1\n[eval]\nbudgets = 100,50\n").find("eval.budgets") != std::string::npos);
}

TEST_CASE("unknown keys and sections are rejected with their line") {
  const std::string e = config_error("[run]\nseed = 1\n\n[trainer]\nalpah = 0.5\n");
  CHECK(e.find("t.cfg:5") != std::string::npos);
  CHECK(e.find("alpah") != std::string::npos);
  CHECK(config_error("[runn]\n").find("t.cfg:1") != std::string::npos);
  CHECK(config_error("[run]\nseed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
  CHECK(config_error("[run]\nseed\n").find("t.cfg:2") != std::string::npos);
  CHECK(config_error("[trainer]\nalpha = x\n").find("trainer.alpha") != std::string::npos);
}

TEST_CASE("missing seed is an error unless overridden") {
  CHECK(config_error("[env]\nsize = 8\n").find("run.seed") != std::string::npos);
  CHECK(parse_config_text("[env]\nsize = 8\n", "t.cfg", 5).master_seed() == 5);
}

TEST_CASE("config hash depends on content only") {
  const RunConfig a = parse_config_text("[run]\nseed = 2\n[trainer]\nalpha = 0.5\ngroup_size = 4\n[env]\nsize = 8\n", "a");
  const RunConfig b = parse_config_text("[env]\nsize = 8\n[trainer]\ngroup_size = 4\nalpha = 0.5\n[run]\nseed = 2\n", "b");
  const RunConfig c = parse_config_text("[run]\nseed = 2\n[trainer]\nalpha = 0.25\ngroup_size = 4\n[env]\nsize = 8\n", "c");
  RunConfig moved = a;
  moved.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) == config_hash(moved));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("unknown subcommand and missing files have distinct exit codes") {
  const Result unknown = run({"fly"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("unknown subcommand 'fly'") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"train-rl", "--config", "/nonexistent/run.cfg"}).code == kExitMissingInput);
  CHECK(run({"regret", "--curve", "/nonexistent/curve.csv", "--c0", "10"}).code == kExitMissingInput);
  const fs::path dir = scratch("badcfg");
  const Result bad = run({"train-rl", "--config", write_file(dir / "bad.cfg", "[run]\nsed = 1\n").string()});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.err.find("sed") != std::string::npos);
  CHECK(run({"train-rl"}).code == kExitUsage);
  fs::remove_all(dir);
}

TEST_CASE("regret prints a single value") {
  const Result r = run({"regret", "--curve", std::string(MRT_FIXTURE_DIR) + "/linear_curve.csv", "--c0", "16384"});
  CHECK(r.code == kExitOk);
  CHECK(r.out == "0.5\n");
  const Result half = run({"regret", "--curve", std::string(MRT_FIXTURE_DIR) + "/linear_curve.csv", "--c0",
                           "8192", "--oracle", "0.5"});
  CHECK(half.out == "0.25\n");
}

TEST_CASE("train-rl writes checkpoint, log, curves and manifest") {
  const fs::path dir = scratch("train");
  const fs::path cfg = write_file(dir / "run.cfg", kSmallRun);
  const Result r = run({"train-rl", "--config", cfg.string(), "--output", (dir / "out").string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (const char* f : {"policy.ckpt", "train_log.jsonl", "scaling_curve.csv", "regret.csv", "manifest.json"})
    CHECK(fs::exists(dir / "out" / f));
  const std::string manifest = read_file(dir / "out" / "manifest.json");
  CHECK(manifest.find(config_hash(parse_config(cfg))) != std::string::npos);
  CHECK(manifest.find("trainer.alpha = 1") != std::string::npos);
  const Table curve = read_table(dir / "out" / "scaling_curve.csv");
  CHECK(curve.rows.size() == 3);
  std::istringstream log(read_file(dir / "out" / "train_log.jsonl"));
  int lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 2);

  const Result again = run({"train-rl", "--config", cfg.string(), "--output", (dir / "again").string()});
  REQUIRE(again.code == kExitOk);
  for (const char* f : {"policy.ckpt", "train_log.jsonl", "scaling_curve.csv", "regret.csv"})
    CHECK(read_file(dir / "out" / f) == read_file(dir / "again" / f));

  const Result seeded =
      run({"train-rl", "--config", cfg.string(), "--seed", "4", "--output", (dir / "seeded").string()});
  REQUIRE(seeded.code == kExitOk);
  CHECK(read_file(dir / "seeded" / "policy.ckpt") != read_file(dir / "out" / "policy.ckpt"));

  const Result eval = run({"evaluate", "--config", cfg.string(), "--policy", (dir / "out" / "policy.ckpt").string(),
                           "--output", (dir / "eval").string()});
  REQUIRE_MESSAGE(eval.code == kExitOk, eval.err);
  for (const char* f : {"scaling_curve.csv", "regret.csv", "maj_table.csv", "histogram.csv", "manifest.json"})
    CHECK(fs::exists(dir / "eval" / f));

  const Result exported = run({"export", "--input", (dir / "out").string(), "--output", (dir / "json").string(),
                               "--format", "json"});
  REQUIRE(exported.code == kExitOk);
  CHECK(read_table(dir / "json" / "scaling_curve.json").rows == curve.rows);
  fs::remove_all(dir);
}

TEST_CASE("output directory falls back to the environment variable") {
  const fs::path dir = scratch("envdir");
  const fs::path cfg = write_file(dir / "run.cfg", kSmallRun);
  ::setenv("MRT_OUTPUT_DIR", (dir / "from_env").string().c_str(), 1);
  const Result r = run({"train-rl", "--config", cfg.string()});
  ::unsetenv("MRT_OUTPUT_DIR");
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "from_env" / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("train-star writes its dataset and log") {
  const fs::path dir = scratch("star");
  const fs::path cfg = write_file(dir / "run.cfg",
                                  "[run]\nseed = 5\n[trainer]\niterations = 1\ntrain_problems = 40\nbudget = 200\n"
                                  "[eval]\neval_problems = 10\n");
  const Result r = run({"train-star", "--config", cfg.string(), "--output", (dir / "out").string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (const char* f : {"policy.ckpt", "star_log.jsonl", "star_dataset.jsonl", "scaling_curve.csv", "manifest.json"})
    CHECK(fs::exists(dir / "out" / f));
  fs::remove_all(dir);
}

TEST_CASE("analyze-traces builds a maj table and regret from grouped prefixes") {
  const fs::path dir = scratch("analyze");
  const Result r = run({"analyze-traces", "--input", std::string(MRT_FIXTURE_DIR) + "/traces.jsonl", "--group-size",
                        "1", "--votes", "1,2,4", "--output", dir.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const Table maj = read_table(dir / "maj_table.csv");
  CHECK(maj.columns == std::vector<std::string>{"j", "p", "accuracy", "n"});
  CHECK(maj.rows.size() == 4 * 3);
  // maj@1 at j = 0 over the three fixtures: 1/4, 1/4, 1/4.
  CHECK(maj.rows[0] == std::vector<double>{0, 1, 0.25, 3});
  CHECK(fs::exists(dir / "regret.csv"));
  CHECK(fs::exists(dir / "histogram.csv"));
  CHECK(r.out.find("episode_budget_regret ") == 0);

  const Result grouped = run({"analyze-traces", "--input", std::string(MRT_FIXTURE_DIR) + "/traces.jsonl",
                              "--group-size", "5", "--output", (dir / "g5").string()});
  REQUIRE_MESSAGE(grouped.code == kExitOk, grouped.err);
  CHECK(read_table(dir / "g5" / "maj_table.csv").rows.size() == 2 * 3);
  fs::remove_all(dir);
}
