// Command-line front end: solve-ne | train-mddr | benchmark | simulate |
// verify-all, each writing CSV artifacts plus a manifest under --out.
#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "iomarket/harness.hpp"

namespace hn = iomarket::harness;

namespace {

void add_common_options(CLI::App* cmd, hn::ExperimentSpec& spec, bool& seed_flag) {
  cmd->add_option("--config", spec.config_path, "config file path (omitted: built-in instance)");
  cmd->add_option("--seed", spec.seed, "unsigned 64-bit experiment seed")
      ->each([&seed_flag](const std::string&) { seed_flag = true; });
  cmd->add_option("--out", spec.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--override", spec.overrides, "config override key=value (repeatable)");
  cmd->add_option("--jobs", spec.jobs, "worker threads for --instances")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--instances", spec.instances,
                  "independent instances at seed, seed+1, ... in seed_<s>/ subdirs")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"immersion-aware model trading: equilibrium, learning, and federated simulation"};
  app.require_subcommand(1);

  hn::ExperimentSpec spec;
  bool seed_flag = false;

  CLI::App* solve = app.add_subcommand("solve-ne", "analytical market equilibrium");
  add_common_options(solve, spec, seed_flag);

  CLI::App* train = app.add_subcommand("train-mddr", "distributed reward agents");
  add_common_options(train, spec, seed_flag);
  train->add_option("--episodes", spec.episodes, "training episodes")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  CLI::App* bench = app.add_subcommand("benchmark", "five-scheme allocation comparison");
  add_common_options(bench, spec, seed_flag);

  CLI::App* sim = app.add_subcommand("simulate", "trading phase then federated rounds");
  add_common_options(sim, spec, seed_flag);
  sim->add_option("--solver", spec.solver, "market solver: ne | mddr")
      ->check(CLI::IsMember({"ne", "mddr"}))
      ->capture_default_str();
  sim->add_option("--episodes", spec.episodes, "episodes when --solver mddr")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  CLI::App* ver = app.add_subcommand("verify-all", "run every invariant and oracle suite");
  add_common_options(ver, spec, seed_flag);
  ver->add_flag("--thorough", spec.thorough, "full sample counts (slower)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage hint
    return 2;
  }

  if (solve->parsed()) spec.command = hn::Command::SolveNe;
  if (train->parsed()) spec.command = hn::Command::TrainMddr;
  if (bench->parsed()) spec.command = hn::Command::Benchmark;
  if (sim->parsed()) spec.command = hn::Command::Simulate;
  if (ver->parsed()) spec.command = hn::Command::VerifyAll;
  spec.seed_given = seed_flag;

  return hn::run_experiment(spec);
}
