// Acceptance gate: eleven end-to-end criteria, one printed line each.
// Tolerances are pinned here, not configurable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "iomarket/config.hpp"
#include "iomarket/csv.hpp"
#include "iomarket/equilibrium.hpp"
#include "iomarket/flsim.hpp"
#include "iomarket/harness.hpp"
#include "iomarket/iom.hpp"
#include "iomarket/mddr.hpp"
#include "iomarket/net.hpp"
#include "iomarket/schemes.hpp"
#include "iomarket/verify.hpp"

using namespace iomarket;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(const char* id, const char* name, const Outcome& o) {
  std::printf("[%s] %s %s%s%s\n", o.pass ? "PASS" : "FAIL", id, name,
              o.detail.empty() ? "" : " -- ", o.detail.c_str());
  std::fflush(stdout);
}

Outcome guarded(const std::function<Outcome()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("closed-form follower matches a dense grid oracle") {
  const Outcome o = guarded([] {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const TradingConfig cfg = verify::random_unit_instance(rng);
      Rng crng = rng.child(static_cast<std::uint64_t>(i) + 1);
      const ChannelState ch = sample_channel(cfg, crng);
      const double F = eq::pair_threshold_F(cfg, ch, 0, 0);
      const double I = iom::contribution_prediction(cfg.omega.at(0, 0), cfg.mus[0].theta,
                                                    cfg.mus[0].x, cfg.msps[0].tau, cfg.T,
                                                    cfg.msps[0].epsilon, cfg.msps[0].eta);
      const double price = (16.0 * F * F / I) * std::exp(rng.uniform(std::log(0.05), std::log(100.0)));
      const auto r = eq::follower_best_response(cfg, ch, 0, std::vector<double>{price})[0];
      const double closed = r.net;  // 0 when withheld
      const double f_cap = 0.9999 * (cfg.mus[0].f_max - cfg.mus[0].S / cfg.mus[0].T_req);
      const double B_cap = 0.9999 * cfg.mus[0].B_max;
      const verify::GridBest grid =
          verify::grid_oracle_follower(cfg, ch, 0, 0, price, f_cap, B_cap, 200);
      const double slack = 1e-3 * std::max(1.0, std::abs(grid.utility));
      if (closed < grid.utility - slack)
        return Outcome{false, "instance " + std::to_string(i) + ": closed " + csv::fmt(closed) +
                                  " < grid " + csv::fmt(grid.utility)};
      worst = std::max(worst, grid.utility - closed);
    }
    const double secs = seconds_since(t0);
    if (secs >= 30.0) return Outcome{false, "runtime " + csv::fmt(secs) + " s >= 30 s"};
    return Outcome{true, "1000 instances, 200x200 grid, worst shortfall " + csv::fmt(worst) +
                             ", " + csv::fmt(secs) + " s"};
  });
  report("C01", "follower-oracle-equivalence", o);
  REQUIRE(o.pass);
}

TEST_CASE("best response is continuous across the branch threshold") {
  const Outcome o = guarded([] {
    Rng rng(102);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const TradingConfig cfg = verify::random_unit_instance(rng);
      Rng crng = rng.child(static_cast<std::uint64_t>(i) + 1);
      const ChannelState ch = sample_channel(cfg, crng);
      const double F = eq::pair_threshold_F(cfg, ch, 0, 0);
      const double I = iom::contribution_prediction(cfg.omega.at(0, 0), cfg.mus[0].theta,
                                                    cfg.mus[0].x, cfg.msps[0].tau, cfg.T,
                                                    cfg.msps[0].epsilon, cfg.msps[0].eta);
      const double thr = F * F / I;
      const double eps = 1e-9 * thr;
      const auto lo = eq::follower_branch_point(cfg, ch, 0, 0, thr - eps);
      const auto hi = eq::follower_branch_point(cfg, ch, 0, 0, thr + eps);
      const double df = std::abs(hi.f - lo.f);
      const double dB = std::abs(hi.B - lo.B);
      worst = std::max(worst, std::max(df, dB));
      if (df >= 1e-9 || dB >= 1e-9)
        return Outcome{false, "instance " + std::to_string(i) + ": |df| = " + csv::fmt(df) +
                                  ", |dB| = " + csv::fmt(dB)};
    }
    return Outcome{true, "100 instances, worst jump " + csv::fmt(worst)};
  });
  report("C02", "branch-continuity", o);
  REQUIRE(o.pass);
}

TEST_CASE("objectives are concave at random interior points") {
  const Outcome o = guarded([] {
    const TradingConfig cfg = default_config(103);
    Rng rng(103);
    const ChannelState ch = sample_channel(cfg, rng);
    Rng srng(104);
    const verify::ConcavityReport rep = verify::verify_concavity(cfg, ch, 100, srng, 1e-6);
    return Outcome{true, "100 interior points each: max user-side eig " +
                             csv::fmt(rep.max_eig_mu) + ", max provider-side eig " +
                             csv::fmt(rep.max_eig_msp) + " (tolerance 1e-6)"};
  });
  report("C03", "concavity-certificates", o);
  REQUIRE(o.pass);
}

TEST_CASE("the equilibrium is unique across random initializations") {
  const Outcome o = guarded([] {
    const TradingConfig cfg = default_config(104);
    Rng rng(104);
    const ChannelState ch = sample_channel(cfg, rng);
    std::vector<PriceMatrix> fixed_points;
    double slowest = 0.0;
    for (int s = 0; s < 5; ++s) {
      PriceMatrix init = eq::midpoint_prices(cfg);
      if (s > 0)
        for (int n = 0; n < cfg.N; ++n)
          for (int m = 0; m < cfg.M; ++m)
            init.p.at(n, m) = rng.uniform(cfg.msps[static_cast<std::size_t>(n)].p_min,
                                          cfg.msps[static_cast<std::size_t>(n)].p_max);
      const auto t0 = std::chrono::steady_clock::now();
      const eq::EquilibriumResult res = eq::solve_ne(cfg, ch, init);
      const double secs = seconds_since(t0);
      slowest = std::max(slowest, secs);
      if (!res.converged)
        return Outcome{false, "initialization " + std::to_string(s) + " did not converge"};
      if (secs >= 30.0)
        return Outcome{false, "solve took " + csv::fmt(secs) + " s >= 30 s"};
      fixed_points.push_back(res.prices);
    }
    double worst = 0.0;
    for (std::size_t s = 1; s < fixed_points.size(); ++s)
      for (int n = 0; n < cfg.N; ++n)
        for (int m = 0; m < cfg.M; ++m) {
          const double a = fixed_points[0].p.at(n, m);
          const double b = fixed_points[s].p.at(n, m);
          const double rel = std::abs(a - b) / std::max(1.0, std::abs(a));
          worst = std::max(worst, rel);
          if (rel >= 1e-4)
            return Outcome{false, "entry (" + std::to_string(n) + "," + std::to_string(m) +
                                      ") disagrees: " + csv::fmt(a) + " vs " + csv::fmt(b)};
        }
    return Outcome{true, "5 initializations agree per entry (worst rel " + csv::fmt(worst) +
                             "), slowest solve " + csv::fmt(slowest) + " s"};
  });
  report("C04", "ne-uniqueness", o);
  REQUIRE(o.pass);
}

TEST_CASE("delivered value rises concavely in the posted price") {
  const Outcome o = guarded([] {
    Rng rng(105);
    for (int i = 0; i < 100; ++i) {
      const TradingConfig cfg = verify::random_unit_instance(rng);
      Rng crng = rng.child(static_cast<std::uint64_t>(i) + 1);
      const ChannelState ch = sample_channel(cfg, crng);
      const double F = eq::pair_threshold_F(cfg, ch, 0, 0);
      const double I = iom::contribution_prediction(cfg.omega.at(0, 0), cfg.mus[0].theta,
                                                    cfg.mus[0].x, cfg.msps[0].tau, cfg.T,
                                                    cfg.msps[0].epsilon, cfg.msps[0].eta);
      const double p0 = (16.0 * F * F / I) * rng.uniform(1.1, 3.0);
      const double h = 1e-4;
      auto value_at = [&](double p) {
        return eq::follower_best_response(cfg, ch, 0, std::vector<double>{p})[0].V;
      };
      const double vm = value_at(p0 - h), v0 = value_at(p0), vp = value_at(p0 + h);
      const double d1 = (vp - vm) / (2.0 * h);
      const double d2 = (vp - 2.0 * v0 + vm) / (h * h);
      if (!(d1 > 0.0))
        return Outcome{false, "instance " + std::to_string(i) + ": V' = " + csv::fmt(d1)};
      if (!(d2 < 0.0))
        return Outcome{false, "instance " + std::to_string(i) + ": V'' = " + csv::fmt(d2)};
    }
    return Outcome{true, "100 instances, step 1e-4: V' > 0 and V'' < 0 on the interior branch"};
  });
  report("C05", "value-monotonicity", o);
  REQUIRE(o.pass);
}

TEST_CASE("event-replayed age matches the closed form over 200 rounds") {
  const Outcome o = guarded([] {
    // Hand-built 1x1 instance with exact unit times: theta = 1/e, x = 2.5e8,
    // tau = 4 and f = 1e9 give T_c = 1; b = 6e5 at B = 6e5, SINR 1 give T_t = 1.
    TradingConfig cfg;
    cfg.M = 1;
    cfg.N = 1;
    cfg.T = 800.0;  // 200 rounds
    cfg.seed = 0;
    cfg.channel_mode = ChannelMode::Static;
    MuProfile mu;
    mu.f_max = 1e10;
    mu.B_max = 1e7;
    mu.c_f = 1e-9;
    mu.c_B = 1e-7;
    mu.x = 2.5e8;
    mu.theta = std::exp(-1.0);
    mu.S = 1.0;
    mu.T_req = 1.0;
    mu.p_tx = 0.1;
    cfg.mus = {mu};
    MspProfile msp;
    msp.tau = 4.0;
    msp.b = 6e5;
    msp.mu = 10.0;
    msp.epsilon = 1.0;
    msp.eta = 1.0;
    msp.p_min = 1e-9;
    msp.p_max = 10.0;
    cfg.msps = {msp};
    cfg.omega = Mat(1, 1, 1.0);
    cfg.fl.class1_prob = {0.5};
    ChannelState ch;
    ch.sinr = Mat(1, 1, 1.0);
    Allocation alloc(1, 1);
    alloc.f.at(0, 0) = 1e9;
    alloc.B.at(0, 0) = 6e5;
    alloc.participating[0][0] = true;

    Rng rng(106);
    const flsim::FlSetup setup = flsim::make_fl_setup(cfg, rng);
    const flsim::FlRunResult run =
        flsim::run_synchronous_rounds(cfg, ch, setup, alloc, rng.child(1));
    const Mat ages = flsim::aoi_timeline(run.events, cfg.T, 1, 1);
    const double closed = iom::average_aoi(4.0, 1.0, 1.0);
    const double rel = std::abs(ages.at(0, 0) - closed) / closed;
    if (rel >= 0.01)
      return Outcome{false, "timeline " + csv::fmt(ages.at(0, 0)) + " vs closed form " +
                                csv::fmt(closed) + ": rel " + csv::fmt(rel)};
    return Outcome{true, "200 rounds: timeline " + csv::fmt(ages.at(0, 0)) + " vs closed form " +
                             csv::fmt(closed) + " (rel " + csv::fmt(rel) + " < 1%)"};
  });
  report("C06", "aoi-closed-form", o);
  REQUIRE(o.pass);
}

TEST_CASE("distributed training approaches the analytical equilibrium") {
  const Outcome o = guarded([] {
    const auto t0 = std::chrono::steady_clock::now();
    const TradingConfig cfg = default_config(0);
    Rng rng(0);
    const ChannelState ch = sample_channel(cfg, rng);
    const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
    if (!ne.converged) return Outcome{false, "analytical solve did not converge"};
    double ne_total = 0.0;
    for (double u : ne.msp_utilities) ne_total += u;

    const mddr::Hyperparams hp;
    const int episodes = 1200;
    const mddr::TrainResult tr = mddr::train(cfg, ch, episodes, hp, Rng(0, 7));
    const int window = 100;
    double tail = 0.0;
    for (int e = episodes - window; e < episodes; ++e)
      tail += tr.episode_total[static_cast<std::size_t>(e)];
    tail /= window;
    const double secs = seconds_since(t0);
    const double ratio = tail / ne_total;
    if (secs >= 600.0) return Outcome{false, "training took " + csv::fmt(secs) + " s >= 600 s"};
    if (ratio < 0.97)
      return Outcome{false, "final-100 mean " + csv::fmt(tail) + " vs analytical " +
                                csv::fmt(ne_total) + ": ratio " + csv::fmt(ratio) + " < 0.97"};
    return Outcome{true, "final-100 mean " + csv::fmt(tail) + " / analytical " +
                             csv::fmt(ne_total) + " = " + csv::fmt(ratio) + ", " +
                             csv::fmt(secs) + " s"};
  });
  report("C07", "mddr-near-optimality", o);
  REQUIRE(o.pass);
}

TEST_CASE("training stays stable when the channel moves") {
  const Outcome o = guarded([] {
    TradingConfig cfg = default_config(0);
    cfg.channel_mode = ChannelMode::Dynamic;
    Rng rng(0);
    const ChannelState ch = sample_channel(cfg, rng);
    const mddr::Hyperparams hp;
    const int episodes = 1200;
    const mddr::TrainResult tr = mddr::train(cfg, ch, episodes, hp, Rng(0, 8));
    const int window = 100;
    double mean = 0.0;
    for (int e = episodes - window; e < episodes; ++e)
      mean += tr.episode_total[static_cast<std::size_t>(e)];
    mean /= window;
    double var = 0.0;
    for (int e = episodes - window; e < episodes; ++e) {
      const double d = tr.episode_total[static_cast<std::size_t>(e)] - mean;
      var += d * d;
    }
    var /= window;
    const double cv = std::sqrt(var) / std::abs(mean);
    if (!(cv < 0.10))
      return Outcome{false, "coefficient of variation " + csv::fmt(cv) + " >= 0.10"};
    return Outcome{true, "final-100 coefficient of variation " + csv::fmt(cv) + " < 0.10"};
  });
  report("C08", "mddr-dynamic-stability", o);
  REQUIRE(o.pass);
}

TEST_CASE("the trading market dominates every benchmark scheme") {
  const Outcome o = guarded([] {
    const int seeds = 20;
    double worst_margin = 1e300;
    double worst_time_gap = 1e300;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      const TradingConfig cfg = default_config(seed);
      Rng rng(seed);
      const ChannelState ch = sample_channel(cfg, rng);
      const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
      if (!ne.converged)
        return Outcome{false, "seed " + std::to_string(seed) + ": solve did not converge"};
      double ne_total = 0.0;
      for (int m = 0; m < cfg.M; ++m)
        for (int n = 0; n < cfg.N; ++n) ne_total += ne.V.at(m, n);

      schemes::SchemeOutcome fixed_out;
      for (const auto kind : {schemes::SchemeKind::XBased, schemes::SchemeKind::WBased,
                              schemes::SchemeKind::WXBased, schemes::SchemeKind::Fixed}) {
        const schemes::SchemeOutcome out = schemes::run_scheme_market(cfg, ch, {kind, cfg.seed});
        double total = 0.0;
        for (double t : out.total_iom) total += t;
        worst_margin = std::min(worst_margin, ne_total - total);
        if (ne_total < total)
          return Outcome{false, "seed " + std::to_string(seed) + ": " +
                                    schemes::scheme_name(kind) + " collected " + csv::fmt(total) +
                                    " > trading " + csv::fmt(ne_total)};
        if (kind == schemes::SchemeKind::Fixed) fixed_out = out;
      }

      // Time-to-target contest against the fixed split, on the same federated
      // setup and the same event streams.
      Rng setup_rng = Rng(seed).child(30);
      const flsim::FlSetup setup = flsim::make_fl_setup(cfg, setup_rng);
      const Rng run_rng = Rng(seed).child(31);
      const flsim::FlRunResult mine =
          flsim::run_synchronous_rounds(cfg, ch, setup, ne.alloc, run_rng);
      const flsim::FlRunResult theirs =
          flsim::run_synchronous_rounds(cfg, ch, setup, fixed_out.alloc, run_rng);
      double my_time = 0.0, their_time = 0.0;
      for (int n = 0; n < cfg.N; ++n) {
        my_time += mine.time_to_target[static_cast<std::size_t>(n)];
        their_time += theirs.time_to_target[static_cast<std::size_t>(n)];
      }
      if (!(my_time < their_time))
        return Outcome{false, "seed " + std::to_string(seed) + ": trading reached 90% in " +
                                  csv::fmt(my_time) + " s vs fixed " + csv::fmt(their_time) +
                                  " s"};
      if (std::isfinite(their_time)) worst_time_gap = std::min(worst_time_gap, their_time - my_time);
    }
    return Outcome{true, "20 seeds: trading IoM >= every scheme (smallest margin " +
                             csv::fmt(worst_margin) + "), faster to 90% than fixed on every instance"};
  });
  report("C09", "benchmark-ordering", o);
  REQUIRE(o.pass);
}

TEST_CASE("backprop agrees with finite differences everywhere") {
  const Outcome o = guarded([] {
    Rng rng(110);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      net::Mlp mlp({3, 5, 2}, net::Activation::Tanh, rng);
      const std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
      auto loss = [&]() {
        const std::vector<double> y = mlp.forward(x);
        return 0.5 * (y[0] * y[0] + y[1] * y[1]);
      };
      net::Mlp grad = mlp.zeros_like();
      net::Mlp::Trace trace;
      const std::vector<double> y = mlp.forward(x, trace);
      mlp.backward(trace, y, grad);
      for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        auto probe = [&](double& p, double g) {
          const double save = p;
          const double h = 1e-5 * std::max(1.0, std::abs(save));
          p = save + h;
          const double up = loss();
          p = save - h;
          const double dn = loss();
          p = save;
          const double fd = (up - dn) / (2.0 * h);
          const double rel = std::abs(fd - g) / std::max(1e-6, std::abs(fd) + std::abs(g));
          worst = std::max(worst, rel);
        };
        for (std::size_t i = 0; i < mlp.layers[l].W.size(); ++i)
          probe(mlp.layers[l].W[i], grad.layers[l].W[i]);
        for (std::size_t i = 0; i < mlp.layers[l].b.size(); ++i)
          probe(mlp.layers[l].b[i], grad.layers[l].b[i]);
      }
    }
    if (worst >= 1e-4)
      return Outcome{false, "worst relative error " + csv::fmt(worst) + " >= 1e-4"};
    return Outcome{true, "20 fixtures, every layer: worst relative error " + csv::fmt(worst)};
  });
  report("C10", "gradient-correctness", o);
  REQUIRE(o.pass);
}

TEST_CASE("the pipeline is byte-deterministic") {
  const Outcome o = guarded([] {
    harness::ExperimentSpec a;
    a.command = harness::Command::Simulate;
    a.seed = 0;
    a.seed_given = true;
    a.out_dir = "acceptance_out/sim_a";
    harness::ExperimentSpec b = a;
    b.out_dir = "acceptance_out/sim_b";
    fs::remove_all("acceptance_out");
    if (harness::run_experiment(a) != 0) return Outcome{false, "first run failed"};
    if (harness::run_experiment(b) != 0) return Outcome{false, "second run failed"};
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(a.out_dir)) {
      const fs::path other = fs::path(b.out_dir) / entry.path().filename();
      if (!fs::exists(other))
        return Outcome{false, entry.path().filename().string() + " missing from second run"};
      if (slurp(entry.path()) != slurp(other))
        return Outcome{false, entry.path().filename().string() + " differs between runs"};
      ++compared;
    }
    if (compared < 8) return Outcome{false, "only " + std::to_string(compared) + " artifacts"};
    return Outcome{true, std::to_string(compared) + " artifacts byte-identical across two runs"};
  });
  report("C11", "end-to-end-determinism", o);
  REQUIRE(o.pass);
}
