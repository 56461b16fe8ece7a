#include "iomarket/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "iomarket/config.hpp"
#include "iomarket/csv.hpp"
#include "iomarket/equilibrium.hpp"
#include "iomarket/flsim.hpp"
#include "iomarket/iom.hpp"
#include "iomarket/mddr.hpp"
#include "iomarket/schemes.hpp"
#include "iomarket/verify.hpp"
#include "iomarket/version.hpp"

namespace iomarket::harness {

namespace fs = std::filesystem;

const char* command_name(Command cmd) {
  switch (cmd) {
    case Command::SolveNe: return "solve-ne";
    case Command::TrainMddr: return "train-mddr";
    case Command::Benchmark: return "benchmark";
    case Command::Simulate: return "simulate";
    case Command::VerifyAll: return "verify-all";
  }
  return "?";
}

bool parse_command(std::string_view text, Command& out) {
  static const std::pair<std::string_view, Command> table[] = {
      {"solve-ne", Command::SolveNe},   {"train-mddr", Command::TrainMddr},
      {"benchmark", Command::Benchmark}, {"simulate", Command::Simulate},
      {"verify-all", Command::VerifyAll}};
  for (const auto& [name, cmd] : table)
    if (text == name) {
      out = cmd;
      return true;
    }
  return false;
}

TradingConfig resolve_config(const ExperimentSpec& spec) {
  TradingConfig cfg;
  if (spec.config_path.empty()) {
    cfg = default_config(spec.seed_given ? spec.seed : 0);
  } else {
    cfg = load_config(spec.config_path);
    if (spec.seed_given) cfg.seed = spec.seed;
  }
  cfg = apply_overrides(cfg, spec.overrides);
  require_valid(cfg);
  return cfg;
}

namespace {

// RNG stream tags for the harness-owned draws; fixed so every command sees
// the same channel/setup for a given config seed.
constexpr std::uint64_t kChannelTag = 10;
constexpr std::uint64_t kMddrTag = 20;
constexpr std::uint64_t kFlSetupTag = 30;
constexpr std::uint64_t kFlRunTag = 31;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os << content;
  if (!os) throw IoError("short write to " + path.string());
}

void write_table(const fs::path& dir, const std::string& name, const csv::Table& table,
                 std::vector<std::string>& artifacts) {
  table.write((dir / name).string());
  artifacts.push_back(name);
}

csv::Table prices_table(const TradingConfig& cfg, const PriceMatrix& prices) {
  csv::Table t = csv::make_table("prices");
  for (int n = 0; n < cfg.N; ++n)
    for (int m = 0; m < cfg.M; ++m) t.row().col(n).col(m).col(prices.p.at(n, m));
  return t;
}

csv::Table allocation_table(const TradingConfig& cfg, const Allocation& alloc, const Mat& V) {
  csv::Table t = csv::make_table("allocation");
  for (int m = 0; m < cfg.M; ++m)
    for (int n = 0; n < cfg.N; ++n) {
      const bool part = alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
      t.row().col(m).col(n).col(part ? 1 : 0).col(alloc.f.at(m, n)).col(alloc.B.at(m, n)).col(
          V.at(m, n));
    }
  return t;
}

csv::Table utilities_table(const char* schema, const std::vector<double>& utilities) {
  csv::Table t = csv::make_table(schema);
  for (std::size_t i = 0; i < utilities.size(); ++i) t.row().col(static_cast<int>(i)).col(utilities[i]);
  return t;
}

double total(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double mat_total(const Mat& m) {
  double s = 0.0;
  for (double x : m.v) s += x;
  return s;
}

struct SummaryBuilder {
  csv::Table table = csv::make_table("summary");
  void add(const std::string& key, double value) { table.row().col(key).col(value); }
  void add(const std::string& key, const std::string& value) { table.row().col(key).col(value); }
};

// --- command bodies ----------------------------------------------------------

std::vector<std::string> do_solve_ne(const TradingConfig& cfg, const fs::path& dir) {
  Rng root(cfg.seed);
  Rng ch_rng = root.child(kChannelTag);
  const ChannelState ch = sample_channel(cfg, ch_rng);
  const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));

  std::vector<std::string> artifacts;
  write_table(dir, "prices.csv", prices_table(cfg, ne.prices), artifacts);
  write_table(dir, "allocation.csv", allocation_table(cfg, ne.alloc, ne.V), artifacts);
  write_table(dir, "msp_utilities.csv", utilities_table("msp_utilities", ne.msp_utilities),
              artifacts);
  write_table(dir, "mu_utilities.csv", utilities_table("mu_utilities", ne.mu_utilities), artifacts);

  SummaryBuilder s;
  s.add("converged", ne.converged ? "true" : "false");
  s.add("sweeps", static_cast<double>(ne.sweeps));
  s.add("total_iom", mat_total(ne.V));
  s.add("total_msp_utility", total(ne.msp_utilities));
  s.add("total_mu_utility", total(ne.mu_utilities));
  write_table(dir, "summary.csv", s.table, artifacts);
  return artifacts;
}

std::vector<std::string> do_train_mddr(const TradingConfig& cfg, const fs::path& dir,
                                       const ExperimentSpec& spec) {
  Rng root(cfg.seed);
  Rng ch_rng = root.child(kChannelTag);
  const ChannelState ch = sample_channel(cfg, ch_rng);
  const mddr::Hyperparams hp;
  const mddr::TrainResult tr = mddr::train(cfg, ch, spec.episodes, hp, root.child(kMddrTag));
  const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));

  std::vector<std::string> artifacts;
  csv::Table trace = csv::make_table("utility_trace");
  for (std::size_t e = 0; e < tr.episode_utilities.size(); ++e)
    for (int n = 0; n < cfg.N; ++n)
      trace.row().col(static_cast<int>(e)).col(n).col(
          tr.episode_utilities[e][static_cast<std::size_t>(n)]);
  write_table(dir, "utility_trace.csv", trace, artifacts);
  write_table(dir, "prices.csv", prices_table(cfg, tr.greedy_prices), artifacts);
  write_table(dir, "msp_utilities.csv", utilities_table("msp_utilities", tr.greedy_utilities),
              artifacts);
  for (int n = 0; n < cfg.N; ++n) {
    const std::string name = "agent_" + std::to_string(n) + ".txt";
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw IoError("cannot open " + (dir / name).string());
    tr.agents[static_cast<std::size_t>(n)].save(os);
    artifacts.push_back(name);
  }

  const double greedy_total = total(tr.greedy_utilities);
  const double ne_total = total(ne.msp_utilities);
  double tail = 0.0;
  const std::size_t episodes = tr.episode_total.size();
  const std::size_t window = std::min<std::size_t>(100, episodes);
  for (std::size_t e = episodes - window; e < episodes; ++e) tail += tr.episode_total[e];
  if (window > 0) tail /= static_cast<double>(window);

  SummaryBuilder s;
  s.add("episodes", static_cast<double>(episodes));
  s.add("greedy_total_utility", greedy_total);
  s.add("ne_total_utility", ne_total);
  s.add("final_window_mean_total", tail);
  s.add("final_window_vs_ne", ne_total != 0.0 ? tail / ne_total : 0.0);
  write_table(dir, "summary.csv", s.table, artifacts);
  return artifacts;
}

std::vector<std::string> do_benchmark(const TradingConfig& cfg, const fs::path& dir) {
  Rng root(cfg.seed);
  Rng ch_rng = root.child(kChannelTag);
  const ChannelState ch = sample_channel(cfg, ch_rng);
  Rng setup_rng = root.child(kFlSetupTag);
  const flsim::FlSetup setup = flsim::make_fl_setup(cfg, setup_rng);
  const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));

  struct Row {
    std::string name;
    Allocation alloc;
    Mat V;
    std::vector<double> price;  // representative posted price per provider
    std::vector<double> iom;    // per provider
    std::vector<double> utility;
  };
  std::vector<Row> rows;

  Row imm;
  imm.name = "immersion";
  imm.alloc = ne.alloc;
  imm.V = ne.V;
  imm.utility = ne.msp_utilities;
  imm.price.assign(static_cast<std::size_t>(cfg.N), 0.0);
  imm.iom.assign(static_cast<std::size_t>(cfg.N), 0.0);
  for (int n = 0; n < cfg.N; ++n) {
    double psum = 0.0, vsum = 0.0;
    for (int m = 0; m < cfg.M; ++m) {
      psum += ne.prices.p.at(n, m);
      vsum += ne.V.at(m, n);
    }
    imm.price[static_cast<std::size_t>(n)] = psum / cfg.M;  // mean of the per-user prices
    imm.iom[static_cast<std::size_t>(n)] = vsum;
  }
  rows.push_back(std::move(imm));

  const schemes::SchemeKind kinds[] = {schemes::SchemeKind::XBased, schemes::SchemeKind::WBased,
                                       schemes::SchemeKind::WXBased, schemes::SchemeKind::Fixed};
  for (const auto kind : kinds) {
    const schemes::BenchmarkScheme scheme{kind, cfg.seed};
    const schemes::SchemeOutcome out = schemes::run_scheme_market(cfg, ch, scheme);
    Row r;
    r.name = schemes::scheme_name(kind);
    r.alloc = out.alloc;
    r.V = out.V;
    r.price = out.uniform_prices;
    r.iom = out.total_iom;
    r.utility = out.msp_utilities;
    rows.push_back(std::move(r));
  }

  std::vector<std::string> artifacts;
  csv::Table iom_table = csv::make_table("benchmark_iom");
  csv::Table time_table = csv::make_table("benchmark_time");
  SummaryBuilder s;
  for (const Row& r : rows) {
    // Same setup and per-(pair,round) data streams for every scheme: the only
    // difference between rows is the allocation itself.
    const flsim::FlRunResult run =
        flsim::run_synchronous_rounds(cfg, ch, setup, r.alloc, root.child(kFlRunTag));
    double iom_sum = 0.0, time_sum = 0.0;
    for (int n = 0; n < cfg.N; ++n) {
      iom_table.row().col(r.name).col(n).col(r.price[static_cast<std::size_t>(n)]).col(
          r.iom[static_cast<std::size_t>(n)]).col(r.utility[static_cast<std::size_t>(n)]);
      time_table.row().col(r.name).col(n).col(run.time_to_target[static_cast<std::size_t>(n)]);
      iom_sum += r.iom[static_cast<std::size_t>(n)];
      time_sum += run.time_to_target[static_cast<std::size_t>(n)];
    }
    s.add("iom_total_" + r.name, iom_sum);
    s.add("time_sum_" + r.name, time_sum);
  }
  write_table(dir, "benchmark_iom.csv", iom_table, artifacts);
  write_table(dir, "benchmark_time.csv", time_table, artifacts);
  write_table(dir, "summary.csv", s.table, artifacts);
  return artifacts;
}

std::vector<std::string> do_simulate(const TradingConfig& cfg, const fs::path& dir,
                                     const ExperimentSpec& spec) {
  Rng root(cfg.seed);
  Rng ch_rng = root.child(kChannelTag);
  const ChannelState ch = sample_channel(cfg, ch_rng);

  // Phase I: probe the fresh global models to price the users' data, then
  // clear the market with the selected solver.
  Rng setup_rng = root.child(kFlSetupTag);
  const flsim::FlSetup setup = flsim::make_fl_setup(cfg, setup_rng);
  TradingConfig traded = cfg;
  Rng omega_rng = root.child(kFlSetupTag + 1);
  traded.omega = flsim::compute_initial_omega(cfg, setup, omega_rng);
  require_valid(traded);

  PriceMatrix prices(cfg.N, cfg.M);
  if (spec.solver == "mddr") {
    const mddr::Hyperparams hp;
    const mddr::TrainResult tr = mddr::train(traded, ch, spec.episodes, hp, root.child(kMddrTag));
    prices = tr.greedy_prices;
  } else {
    prices = eq::solve_ne(traded, ch, eq::midpoint_prices(traded)).prices;
  }
  const eq::MarketResponse resp = eq::respond(traded, ch, prices);

  std::vector<double> msp_utils(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n) {
    std::vector<double> v(static_cast<std::size_t>(cfg.M)), p(static_cast<std::size_t>(cfg.M));
    for (int m = 0; m < cfg.M; ++m) {
      v[static_cast<std::size_t>(m)] = resp.V.at(m, n);
      p[static_cast<std::size_t>(m)] = prices.p.at(n, m);
    }
    msp_utils[static_cast<std::size_t>(n)] = eq::msp_utility(cfg.msps[static_cast<std::size_t>(n)], v, p);
  }

  std::vector<std::string> artifacts;
  write_table(dir, "prices.csv", prices_table(traded, prices), artifacts);
  write_table(dir, "allocation.csv", allocation_table(traded, resp.alloc, resp.V), artifacts);
  write_table(dir, "msp_utilities.csv", utilities_table("msp_utilities", msp_utils), artifacts);
  write_table(dir, "mu_utilities.csv", utilities_table("mu_utilities", resp.mu_utilities),
              artifacts);

  // Phase II: synchronous federated rounds timed by the traded allocation.
  const flsim::FlRunResult run =
      flsim::run_synchronous_rounds(traded, ch, setup, resp.alloc, root.child(kFlRunTag));

  csv::Table events = csv::make_table("events");
  for (const auto& e : run.events)
    events.row().col(e.time).col(flsim::event_kind_name(e.kind)).col(e.mu).col(e.msp).col(e.round);
  write_table(dir, "events.csv", events, artifacts);

  csv::Table acc = csv::make_table("accuracy");
  for (const auto& a : run.accuracy) acc.row().col(a.msp).col(a.round).col(a.time).col(a.acc);
  write_table(dir, "accuracy.csv", acc, artifacts);

  csv::Table aoi = csv::make_table("aoi");
  for (int n = 0; n < cfg.N; ++n) {
    const MspProfile& msp = traded.msps[static_cast<std::size_t>(n)];
    const double horizon = std::floor(traded.T / msp.tau) * msp.tau;
    const Mat avg = flsim::aoi_timeline(run.events, horizon, cfg.M, cfg.N);
    for (int m = 0; m < cfg.M; ++m) {
      double closed = horizon / 2.0;  // no receptions: age grows linearly
      if (resp.alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)]) {
        const MuProfile& mu = traded.mus[static_cast<std::size_t>(m)];
        const double t_c =
            iom::local_training_time(mu.theta, mu.x, msp.tau, resp.alloc.f.at(m, n));
        const double t_t =
            iom::upload_time(traded.payload(m, n), resp.alloc.B.at(m, n), ch.sinr.at(m, n));
        closed = iom::average_aoi(msp.tau, t_c, t_t);
      }
      aoi.row().col(m).col(n).col(avg.at(m, n)).col(closed);
    }
  }
  write_table(dir, "aoi.csv", aoi, artifacts);

  SummaryBuilder s;
  s.add("solver", spec.solver);
  s.add("total_iom", mat_total(resp.V));
  for (int n = 0; n < cfg.N; ++n) {
    const auto& trace = run.acc_by_round[static_cast<std::size_t>(n)];
    s.add("rounds_" + std::to_string(n), static_cast<double>(trace.size()));
    s.add("final_accuracy_" + std::to_string(n), trace.empty() ? 0.0 : trace.back());
    s.add("time_to_target_" + std::to_string(n), run.time_to_target[static_cast<std::size_t>(n)]);
  }
  write_table(dir, "summary.csv", s.table, artifacts);
  return artifacts;
}

std::vector<std::string> do_verify_all(const TradingConfig& cfg, const fs::path& dir,
                                       const ExperimentSpec& spec, bool& all_pass) {
  const std::vector<verify::CheckResult> results = verify::run_all_checks(cfg.seed, !spec.thorough);
  csv::Table t = csv::make_table("checks");
  all_pass = true;
  for (const auto& r : results) {
    std::printf("[%s] %-32s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    t.row().col(r.name).col(r.pass ? "pass" : "fail").col(r.detail);
    all_pass = all_pass && r.pass;
  }
  std::printf("%s: %zu checks\n", all_pass ? "OK" : "FAILED", results.size());
  std::fflush(stdout);
  std::vector<std::string> artifacts;
  write_table(dir, "checks.csv", t, artifacts);
  return artifacts;
}

// Runs one instance into `dir`; returns 0/1 like run_experiment.
int run_instance(const ExperimentSpec& spec, const TradingConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  try {
    std::vector<std::string> artifacts;
    bool ok = true;
    switch (spec.command) {
      case Command::SolveNe: artifacts = do_solve_ne(cfg, dir); break;
      case Command::TrainMddr: artifacts = do_train_mddr(cfg, dir, spec); break;
      case Command::Benchmark: artifacts = do_benchmark(cfg, dir); break;
      case Command::Simulate: artifacts = do_simulate(cfg, dir, spec); break;
      case Command::VerifyAll: artifacts = do_verify_all(cfg, dir, spec, ok); break;
    }
    write_file(dir / "config_resolved.txt", serialize_config(cfg));
    artifacts.push_back("config_resolved.txt");
    std::sort(artifacts.begin(), artifacts.end());

    nlohmann::json manifest;
    manifest["artifacts"] = artifacts;
    manifest["command"] = command_name(spec.command);
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, config_hash(cfg));
    manifest["config_hash"] = hash;
    manifest["seed"] = cfg.seed;
    manifest["version"] = kVersion;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["command"] = command_name(spec.command);
    err["error"] = e.what();
    write_file(dir / "error.json", err.dump(2) + "\n");
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int run_experiment(const ExperimentSpec& spec) {
  const fs::path out(spec.out_dir);
  try {
    fs::create_directories(out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cannot create %s: %s\n", spec.out_dir.c_str(), e.what());
    return 1;
  }

  if (spec.instances <= 1) {
    TradingConfig cfg;
    try {
      cfg = resolve_config(spec);
    } catch (const std::exception& e) {
      nlohmann::json err;
      err["command"] = command_name(spec.command);
      err["error"] = e.what();
      write_file(out / "error.json", err.dump(2) + "\n");
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
    }
    return run_instance(spec, cfg, out);
  }

  // Instance s runs at seed + s in its own subdirectory; workers never share
  // mutable state, so the artifacts are independent of the thread count.
  std::vector<int> status(static_cast<std::size_t>(spec.instances), 0);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= spec.instances) return;
      ExperimentSpec sub = spec;
      sub.seed = spec.seed + static_cast<std::uint64_t>(i);
      sub.seed_given = true;
      sub.instances = 1;
      const fs::path dir = out / ("seed_" + std::to_string(sub.seed));
      try {
        const TradingConfig cfg = resolve_config(sub);
        status[static_cast<std::size_t>(i)] = run_instance(sub, cfg, dir);
      } catch (const std::exception& e) {
        fs::create_directories(dir);
        nlohmann::json err;
        err["command"] = command_name(sub.command);
        err["error"] = e.what();
        write_file(dir / "error.json", err.dump(2) + "\n");
        std::fprintf(stderr, "error (seed %" PRIu64 "): %s\n", sub.seed, e.what());
        status[static_cast<std::size_t>(i)] = 1;
      }
    }
  };
  const int threads = std::max(1, std::min(spec.jobs, spec.instances));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  nlohmann::json manifest;
  manifest["command"] = command_name(spec.command);
  manifest["instances"] = spec.instances;
  manifest["seed_base"] = spec.seed;
  manifest["version"] = kVersion;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");

  int rc = 0;
  for (int s : status) rc = std::max(rc, s);
  return rc;
}

}  // namespace iomarket::harness
