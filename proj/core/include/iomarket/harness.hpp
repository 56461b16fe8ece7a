#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "iomarket/types.hpp"

namespace iomarket::harness {

enum class Command { SolveNe, TrainMddr, Benchmark, Simulate, VerifyAll };

const char* command_name(Command cmd);
// Accepts the CLI spellings ("solve-ne", "train-mddr", ...); false on unknown.
bool parse_command(std::string_view text, Command& out);

struct ExperimentSpec {
  Command command = Command::SolveNe;
  std::string config_path;  // empty: built-in default instance for the seed
  std::uint64_t seed = 0;
  bool seed_given = false;  // when false, a config file's own seed wins
  std::string out_dir = "out";
  std::vector<std::string> overrides;  // key=value, applied before validation
  int jobs = 1;       // worker threads when instances > 1
  int instances = 1;  // instance s uses seed + s, writes seed_<s>/
  int episodes = 1200;       // train-mddr / simulate --solver mddr
  std::string solver = "ne";  // simulate: "ne" | "mddr"
  bool thorough = false;      // verify-all sample sizes
};

// Loads (or generates) the config, applies overrides, validates.
TradingConfig resolve_config(const ExperimentSpec& spec);

// Runs one experiment end to end, writing artifacts + manifest.json under
// out_dir. Returns the process exit status: 0 on success, 1 on any module
// error (an error.json with the message is left in out_dir) or failed check.
int run_experiment(const ExperimentSpec& spec);

}  // namespace iomarket::harness
