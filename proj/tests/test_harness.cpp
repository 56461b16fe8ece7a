#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iomarket/config.hpp"
#include "iomarket/csv.hpp"
#include "iomarket/harness.hpp"
#include "json.hpp"

using namespace iomarket;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("harness_test") / name;
  fs::remove_all(dir);
  return dir;
}

bool summary_has(const fs::path& dir, const std::string& key, const std::string& value) {
  const std::string text = slurp(dir / "summary.csv");
  return text.find(key + "," + value) != std::string::npos;
}

}  // namespace

TEST_CASE("command names round-trip") {
  harness::Command c;
  CHECK(harness::parse_command("solve-ne", c));
  CHECK(c == harness::Command::SolveNe);
  CHECK(harness::parse_command("train-mddr", c));
  CHECK(c == harness::Command::TrainMddr);
  CHECK(harness::parse_command("benchmark", c));
  CHECK(harness::parse_command("simulate", c));
  CHECK(harness::parse_command("verify-all", c));
  CHECK_FALSE(harness::parse_command("sovle-ne", c));
  CHECK(std::string(harness::command_name(harness::Command::VerifyAll)) == "verify-all");
}

TEST_CASE("csv tables format deterministically") {
  csv::Table t({"a", "b"});
  CHECK(t.to_string() == "a,b\n");  // header-only when empty
  t.row().col(1.5).col("x");
  t.row().col(0.1).col(123);
  CHECK(t.to_string() == "a,b\n1.5,x\n0.1,123\n");
  CHECK(csv::fmt(1.0 / 3.0) == csv::fmt(1.0 / 3.0));
  CHECK_THROWS_AS(csv::make_table("no-such-schema"), IoError);
  CHECK(csv::schema_header("utility_trace") ==
        std::vector<std::string>{"episode", "msp", "utility"});
}

TEST_CASE("config resolution applies seed and overrides") {
  harness::ExperimentSpec spec;
  spec.command = harness::Command::SolveNe;
  spec.seed = 7;
  spec.seed_given = true;
  spec.overrides = {"market.T=64"};
  const TradingConfig cfg = harness::resolve_config(spec);
  CHECK(cfg.seed == 7);
  CHECK(cfg.T == 64.0);

  harness::ExperimentSpec bad = spec;
  bad.overrides = {"bogus.key=1"};
  CHECK_THROWS_AS(harness::resolve_config(bad), IoError);
}

TEST_CASE("solve-ne experiment writes the full artifact set") {
  harness::ExperimentSpec spec;
  spec.command = harness::Command::SolveNe;
  spec.seed = 5;
  spec.seed_given = true;
  spec.out_dir = fresh_dir("solve_ne").string();
  REQUIRE(harness::run_experiment(spec) == 0);

  const fs::path dir(spec.out_dir);
  for (const char* name : {"config_resolved.txt", "prices.csv", "allocation.csv",
                           "msp_utilities.csv", "mu_utilities.csv", "summary.csv",
                           "manifest.json"})
    CHECK(fs::exists(dir / name));
  CHECK(summary_has(dir, "converged", "true"));

  const nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("command") == "solve-ne");
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("artifacts").is_array());
  // The resolved config reparses to the same instance the manifest hashed.
  const TradingConfig cfg = parse_config(slurp(dir / "config_resolved.txt"));
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  CHECK(manifest.at("config_hash") == std::string(hex));
}

TEST_CASE("failed experiments leave an error report") {
  harness::ExperimentSpec spec;
  spec.command = harness::Command::SolveNe;
  spec.overrides = {"mu.0.theta=2.0"};  // invalid: tolerance must be < 1
  spec.out_dir = fresh_dir("invalid").string();
  CHECK(harness::run_experiment(spec) == 1);
  CHECK(fs::exists(fs::path(spec.out_dir) / "error.json"));
}

TEST_CASE("training experiment emits a trace per episode and provider") {
  harness::ExperimentSpec spec;
  spec.command = harness::Command::TrainMddr;
  spec.seed = 6;
  spec.seed_given = true;
  spec.episodes = 2;
  spec.out_dir = fresh_dir("train").string();
  REQUIRE(harness::run_experiment(spec) == 0);

  const fs::path dir(spec.out_dir);
  const std::string trace = slurp(dir / "utility_trace.csv");
  CHECK(trace.rfind("episode,msp,utility\n", 0) == 0);
  // 2 episodes x 3 providers = 6 data rows.
  int rows = -1;  // header does not count
  for (char ch : trace)
    if (ch == '\n') ++rows;
  CHECK(rows == 6);
  for (int n = 0; n < 3; ++n)
    CHECK(fs::exists(dir / ("agent_" + std::to_string(n) + ".txt")));
  CHECK(summary_has(dir, "episodes", "2"));
}

TEST_CASE("simulate is byte-identical across same-seed runs") {
  harness::ExperimentSpec a;
  a.command = harness::Command::Simulate;
  a.seed = 9;
  a.seed_given = true;
  a.out_dir = fresh_dir("sim_a").string();
  harness::ExperimentSpec b = a;
  b.out_dir = fresh_dir("sim_b").string();
  REQUIRE(harness::run_experiment(a) == 0);
  REQUIRE(harness::run_experiment(b) == 0);

  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a.out_dir)) {
    const fs::path other = fs::path(b.out_dir) / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    ++compared;
  }
  CHECK(compared >= 8);  // config, prices, allocation, utilities, events, ...

  harness::ExperimentSpec c = a;
  c.seed = 10;
  c.out_dir = fresh_dir("sim_c").string();
  REQUIRE(harness::run_experiment(c) == 0);
  CHECK(slurp(fs::path(a.out_dir) / "events.csv") != slurp(fs::path(c.out_dir) / "events.csv"));
}

TEST_CASE("multi-instance runs split seeds into subdirectories") {
  harness::ExperimentSpec spec;
  spec.command = harness::Command::SolveNe;
  spec.seed = 20;
  spec.seed_given = true;
  spec.instances = 3;
  spec.jobs = 2;
  spec.out_dir = fresh_dir("multi").string();
  REQUIRE(harness::run_experiment(spec) == 0);
  for (int i = 0; i < 3; ++i)
    CHECK(fs::exists(fs::path(spec.out_dir) / ("seed_" + std::to_string(20 + i)) /
                     "summary.csv"));
  CHECK(fs::exists(fs::path(spec.out_dir) / "manifest.json"));

  // Parallel fan-out must not change any artifact: rerun serially and compare.
  harness::ExperimentSpec serial = spec;
  serial.jobs = 1;
  serial.out_dir = fresh_dir("multi_serial").string();
  REQUIRE(harness::run_experiment(serial) == 0);
  for (int i = 0; i < 3; ++i) {
    const std::string sub = "seed_" + std::to_string(20 + i);
    CHECK(slurp(fs::path(spec.out_dir) / sub / "prices.csv") ==
          slurp(fs::path(serial.out_dir) / sub / "prices.csv"));
  }
}

TEST_CASE("benchmark experiment ranks the trading equilibrium first") {
  harness::ExperimentSpec spec;
  spec.command = harness::Command::Benchmark;
  spec.seed = 3;
  spec.seed_given = true;
  spec.out_dir = fresh_dir("bench").string();
  REQUIRE(harness::run_experiment(spec) == 0);

  const fs::path dir(spec.out_dir);
  CHECK(fs::exists(dir / "benchmark_iom.csv"));
  CHECK(fs::exists(dir / "benchmark_time.csv"));
  const std::string summary = slurp(dir / "summary.csv");
  auto total_of = [&](const std::string& name) {
    const std::string key = "iom_total_" + name + ",";
    const std::size_t at = summary.find(key);
    REQUIRE(at != std::string::npos);
    return std::stod(summary.substr(at + key.size()));
  };
  const double immersion = total_of("immersion");
  for (const char* scheme : {"x_based", "w_based", "w_x_based", "fixed"})
    CHECK(immersion >= total_of(scheme) - 1e-9);
}
