#pragma once

// Run configuration, manifests and the subcommand dispatcher behind the `mrt`
// executable.
//
// Config files are line-oriented:
//
//   [run]
//   seed = 7
//   [trainer]
//   alpha = 1.0
//
// Sections: run, env, policy, trainer, eval. Unknown sections or keys, a
// repeated key, or a malformed line are errors naming the file and line.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrt/envs.hpp"
#include "mrt/trainer_rl.hpp"
#include "mrt/trainer_star.hpp"

namespace mrt {

inline constexpr const char* kArtifactVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitMissingInput = 4,
  kExitRuntime = 5,
};

struct PolicyConfig {
  double temperature = 1.0;
  std::string checkpoint;  // empty: uniform initial logits
};

struct EvalConfig {
  std::vector<int> budgets = {50, 100, 150, 200};
  std::vector<int> vote_counts = {1, 2, 4, 8};
  std::vector<int> extensions = {2, 4, 6, 8};
  int max_ext_tokens = 25;
  int forcing_base = -1;  // -1: the last scheduled budget; 0: no forcing rows
  int votes = 1;
  int eval_problems = 200;
  double bin_width = 0.0625;
  std::string format = "csv";
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  EnvConfig env;
  PolicyConfig policy;
  TrainerConfig rl;
  StarConfig star;
  int train_problems = 500;
  EvalConfig eval;

  std::uint64_t master_seed() const;
  int resolved_forcing_base() const;
  TrainerConfig trainer_config() const;
  StarConfig star_config() const;
  void validate() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& source,
                            std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig parse_config(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seed_override = std::nullopt);

// Every key with its resolved value, one "section.key = value" line each,
// sorted by key.
std::string resolved_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string artifact_version = kArtifactVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> files;
  std::string resolved_config;
};

std::string render_manifest(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

std::vector<Problem> training_problems(const RunConfig& config);
std::vector<Problem> evaluation_problems(const RunConfig& config);

// Dispatches argv (without the program name). Diagnostics go to `err`,
// results such as the regret value to `out`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mrt
