#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>

#include "iomarket/config.hpp"
#include "iomarket/csv.hpp"
#include "iomarket/flsim.hpp"
#include "iomarket/golden.hpp"
#include "iomarket/iom.hpp"
#include "iomarket/mddr.hpp"
#include "iomarket/net.hpp"
#include "iomarket/schemes.hpp"
#include "iomarket/verify.hpp"

namespace iomarket::verify {

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
  if (!cond) throw CheckFailure(msg);
}

std::string num(double x) { return csv::fmt(x); }

double participation_price16(const TradingConfig& cfg, const ChannelState& ch, int m, int n) {
  const double F = eq::pair_threshold_F(cfg, ch, m, n);
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  const double I = iom::contribution_prediction(cfg.omega.at(m, n), mu.theta, mu.x, msp.tau, cfg.T,
                                                msp.epsilon, msp.eta);
  return 16.0 * F * F / I;
}

// ---- individual checks ------------------------------------------------------

void check_rng_streams(std::uint64_t seed, bool, std::string& detail) {
  Rng a(seed), b(seed);
  for (int i = 0; i < 100; ++i) expect(a.next_u64() == b.next_u64(), "same seed diverged");
  Rng c(seed);
  Rng child_early = c.child(7);
  for (int i = 0; i < 50; ++i) c.next_u64();
  Rng child_late = c.child(7);
  for (int i = 0; i < 100; ++i)
    expect(child_early.next_u64() == child_late.next_u64(),
           "child stream depends on draw position");
  Rng d(seed, 1);
  int same = 0;
  Rng e(seed, 2);
  for (int i = 0; i < 64; ++i) same += (d.next_u64() >> 63) == (e.next_u64() >> 63);
  expect(same > 10 && same < 54, "parallel streams look correlated or constant");
  double mean = 0.0;
  Rng g(seed);
  for (int i = 0; i < 10000; ++i) mean += g.uniform01();
  mean /= 10000.0;
  expect(std::abs(mean - 0.5) < 0.02, "uniform01 mean off: " + num(mean));
  detail = "streams reproducible, children position-independent";
}

void check_config_roundtrip(std::uint64_t seed, bool, std::string& detail) {
  const TradingConfig cfg = default_config(seed);
  const std::string text = serialize_config(cfg);
  const TradingConfig back = parse_config(text);
  expect(serialize_config(back) == text, "serialize(parse(serialize)) differs");
  expect(config_hash(cfg) == config_hash(back), "config hash differs");
  const TradingConfig overridden = apply_overrides(cfg, {"market.T=42"});
  expect(overridden.T == 42.0, "override did not take: T=" + num(overridden.T));
  expect(validate_config(cfg).empty(), "default instance reported invalid");
  detail = "round-trip byte-stable, hash stable, overrides apply";
}

void check_config_validation(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  cfg.mus[0].theta = 1.0;
  expect(!validate_config(cfg).empty(), "theta = 1 accepted");
  cfg = default_config(seed);
  cfg.mus[0].S = cfg.mus[0].T_req * cfg.mus[0].f_max;
  expect(!validate_config(cfg).empty(), "baseline-service overload accepted");
  cfg = default_config(seed);
  cfg.msps[0].p_min = cfg.msps[0].p_max;
  expect(!validate_config(cfg).empty(), "empty price band accepted");
  cfg = default_config(seed);
  cfg.T = 0.5 * cfg.msps[0].tau;
  expect(!validate_config(cfg).empty(), "horizon shorter than a round accepted");
  detail = "malformed configs rejected with issues";
}

void check_iom_identities(std::uint64_t seed, bool, std::string& detail) {
  Rng rng(seed, 40);
  for (int i = 0; i < 50; ++i) {
    const double tau = rng.uniform(1.0, 8.0);
    const double T_c = rng.uniform(0.01, 2.0);
    const double T_t = rng.uniform(0.01, 2.0);
    const double aoi = iom::average_aoi(tau, T_c, T_t);
    expect(std::abs(aoi - (tau / 2 + T_c + T_t)) < 1e-12, "average_aoi identity");
    const double I = rng.uniform(0.1, 5.0);
    const double v = iom::iom_value(I, tau, aoi);
    expect(std::abs(v - I * (tau - aoi)) < 1e-12, "iom_value identity");
    // V > 0 exactly when the update beats half the round length.
    expect((v > 0) == (T_c + T_t < tau / 2), "value sign vs freshness");
  }
  const double theta = 0.5, x = 2.0, tau = 3.0, f = 4.0;
  expect(std::abs(iom::local_training_time(theta, x, tau, f) - std::log(2.0) * 6.0 / 4.0) < 1e-12,
         "training time formula");
  expect(std::abs(iom::upload_time(6.0, 2.0, 3.0) - 6.0 / (2.0 * 2.0)) < 1e-12,
         "upload time formula (log2(4) = 2)");
  expect(std::abs(iom::instantaneous_aoi(5.0, 3.5) - 1.5) < 1e-15, "instantaneous aoi");
  bool threw = false;
  try {
    iom::instantaneous_aoi(1.0, 2.0);
  } catch (const NegativeAge&) {
    threw = true;
  }
  expect(threw, "future generation time accepted");
  detail = "closed-form identities and guards hold";
}

void check_grid_dominance(std::uint64_t seed, bool quick, std::string& detail) {
  const int instances = quick ? 30 : 200;
  const int grid_n = quick ? 120 : 200;
  Rng rng(seed, 41);
  double worst_rel = 0.0;
  for (int i = 0; i < instances; ++i) {
    TradingConfig cfg = random_unit_instance(rng);
    Rng ch_rng = rng.child(static_cast<std::uint64_t>(i) + 1);
    const ChannelState ch = sample_channel(cfg, ch_rng);
    const double thr16 = participation_price16(cfg, ch, 0, 0);
    const double p = thr16 * std::exp(rng.uniform(std::log(0.05), std::log(100.0)));
    const auto r = eq::follower_best_response(cfg, ch, 0, std::vector<double>{p})[0];
    const double phi_closed = r.branch == eq::Branch::Withheld ? 0.0 : r.net;
    const MuProfile& mu = cfg.mus[0];
    const double f_cap = 0.9999 * (mu.f_max - mu.S / mu.T_req);
    const double B_cap = 0.9999 * mu.B_max;
    const GridBest grid = grid_oracle_follower(cfg, ch, 0, 0, p, f_cap, B_cap, grid_n);
    const double slack = 1e-3 * std::max(1.0, std::abs(grid.utility));
    expect(phi_closed >= grid.utility - slack,
           "closed form " + num(phi_closed) + " below grid " + num(grid.utility) + " at p=" + num(p));
    if (grid.utility > 0.0)
      worst_rel = std::max(worst_rel, (grid.utility - phi_closed) / std::max(1.0, grid.utility));
    if (grid.utility > 0.0 && r.branch == eq::Branch::Interior) {
      const double cell = f_cap / grid_n;
      expect(std::abs(r.f - grid.f) <= 1.6 * cell,
             "interior argmax off grid: f*=" + num(r.f) + " grid=" + num(grid.f));
    }
  }
  detail = std::to_string(instances) + " instances, worst shortfall " + num(worst_rel);
}

void check_branch_continuity(std::uint64_t seed, bool quick, std::string& detail) {
  const int instances = quick ? 40 : 100;
  Rng rng(seed, 42);
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    TradingConfig cfg = random_unit_instance(rng);
    Rng ch_rng = rng.child(static_cast<std::uint64_t>(i) + 1);
    const ChannelState ch = sample_channel(cfg, ch_rng);
    const double F = eq::pair_threshold_F(cfg, ch, 0, 0);
    const MuProfile& mu = cfg.mus[0];
    const MspProfile& msp = cfg.msps[0];
    const double I = iom::contribution_prediction(cfg.omega.at(0, 0), mu.theta, mu.x, msp.tau,
                                                  cfg.T, msp.epsilon, msp.eta);
    const double thr = F * F / I;
    const double eps = 1e-9 * thr;
    const auto lo = eq::follower_branch_point(cfg, ch, 0, 0, thr - eps);
    const auto hi = eq::follower_branch_point(cfg, ch, 0, 0, thr + eps);
    expect(lo.branch == eq::Branch::DeadlineBound, "below-threshold branch wrong");
    expect(hi.branch == eq::Branch::Interior, "above-threshold branch wrong");
    const double df = std::abs(lo.f - hi.f);
    const double dB = std::abs(lo.B - hi.B);
    expect(df < 1e-9, "f jump " + num(df) + " at branch point");
    expect(dB < 1e-9, "B jump " + num(dB) + " at branch point");
    worst = std::max(worst, std::max(df, dB));
  }
  detail = std::to_string(instances) + " instances, worst jump " + num(worst);
}

void check_follower_rationality(std::uint64_t seed, bool quick, std::string& detail) {
  const int instances = quick ? 30 : 100;
  Rng rng(seed, 43);
  for (int i = 0; i < instances; ++i) {
    TradingConfig cfg = random_unit_instance(rng);
    Rng ch_rng = rng.child(static_cast<std::uint64_t>(i) + 1);
    const ChannelState ch = sample_channel(cfg, ch_rng);
    const double thr16 = participation_price16(cfg, ch, 0, 0);
    const auto low = eq::follower_best_response(cfg, ch, 0, std::vector<double>{0.5 * thr16})[0];
    expect(low.branch == eq::Branch::Withheld, "unprofitable pair traded");
    expect(low.f == 0.0 && low.B == 0.0 && low.V == 0.0, "withheld pair carries resources");
    const auto high = eq::follower_best_response(cfg, ch, 0, std::vector<double>{2.0 * thr16})[0];
    expect(high.branch == eq::Branch::Interior, "profitable pair withheld");
    expect(high.V > 0.0 && high.net > 0.0, "participation with nonpositive value/surplus");
  }
  detail = std::to_string(instances) + " instances filtered correctly on both sides";
}

void check_budget_feasibility(std::uint64_t seed, bool quick, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng rng(seed, 44);
  const ChannelState ch = sample_channel(cfg, rng);
  const int trials = quick ? 20 : 100;
  for (int t = 0; t < trials; ++t) {
    PriceMatrix prices(cfg.N, cfg.M);
    for (int n = 0; n < cfg.N; ++n)
      for (int m = 0; m < cfg.M; ++m)
        prices.p.at(n, m) = rng.uniform(cfg.msps[static_cast<std::size_t>(n)].p_min,
                                        cfg.msps[static_cast<std::size_t>(n)].p_max);
    const eq::MarketResponse resp = eq::respond(cfg, ch, prices);
    for (int m = 0; m < cfg.M; ++m) {
      const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
      double sum_f = 0.0, sum_B = 0.0;
      std::vector<double> f_row(static_cast<std::size_t>(cfg.N)), B_row(static_cast<std::size_t>(cfg.N));
      for (int n = 0; n < cfg.N; ++n) {
        f_row[static_cast<std::size_t>(n)] = resp.alloc.f.at(m, n);
        B_row[static_cast<std::size_t>(n)] = resp.alloc.B.at(m, n);
        sum_f += resp.alloc.f.at(m, n);
        sum_B += resp.alloc.B.at(m, n);
      }
      expect(sum_f < mu.f_max, "C1 compute violated");
      expect(sum_B < mu.B_max, "C1 bandwidth violated");
      expect(mu.S / (mu.f_max - sum_f) < mu.T_req, "C3 violated");
      // mu_utility must accept the response and agree with the net sum.
      const double util = eq::mu_utility(cfg, ch, m, prices.mu_prices(m), f_row, B_row);
      expect(std::abs(util - resp.mu_utilities[static_cast<std::size_t>(m)]) <=
                 1e-9 * std::max(1.0, std::abs(util)),
             "mu_utility disagrees with response net sum");
    }
  }
  bool threw = false;
  try {
    const MuProfile& mu = cfg.mus[0];
    std::vector<double> f_row(static_cast<std::size_t>(cfg.N), mu.f_max);
    std::vector<double> B_row(static_cast<std::size_t>(cfg.N), mu.B_max / (2.0 * cfg.N));
    PriceMatrix prices = eq::midpoint_prices(cfg);
    eq::mu_utility(cfg, ch, 0, prices.mu_prices(0), f_row, B_row);
  } catch (const InfeasibleAllocation& e) {
    threw = e.constraint() == "C1";
  }
  expect(threw, "compute overdraw not rejected as C1");
  detail = std::to_string(trials) + " random price matrices feasible and consistent";
}

void check_concavity(std::uint64_t seed, bool quick, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng rng(seed, 45);
  const ChannelState ch = sample_channel(cfg, rng);
  const int samples = quick ? 20 : 100;
  const ConcavityReport rep = verify_concavity(cfg, ch, samples, rng);
  detail = "max eig user " + num(rep.max_eig_mu) + ", provider " + num(rep.max_eig_msp) + " over " +
           std::to_string(samples) + " points each";
}

void check_hessian_sensitivity(std::uint64_t, bool, std::string& detail) {
  auto convex = [](std::span<const double> z) { return z[0] * z[0] + z[1] * z[1]; };
  auto concave = [](std::span<const double> z) { return -(z[0] * z[0] + 2.0 * z[1] * z[1]); };
  const std::vector<double> x{0.7, -0.3}, scale{1.0, 1.0};
  const double up = fd_hessian_max_eigenvalue(convex, x, scale);
  const double down = fd_hessian_max_eigenvalue(concave, x, scale);
  expect(std::abs(up - 2.0) < 1e-4, "convex quadratic eigenvalue wrong: " + num(up));
  expect(std::abs(down + 2.0) < 1e-4, "concave quadratic eigenvalue wrong: " + num(down));
  detail = "detector reports +2 / -2 on known quadratics";
}

void check_ne_fixed_point(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng rng(seed, 46);
  const ChannelState ch = sample_channel(cfg, rng);
  const eq::EquilibriumResult res = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
  expect(res.converged, "best-response iteration did not converge");
  for (int n = 0; n < cfg.N; ++n) {
    const std::vector<double> br = eq::msp_best_response(cfg, ch, n, res.prices);
    PriceMatrix probe = res.prices;
    for (int m = 0; m < cfg.M; ++m) probe.p.at(n, m) = br[static_cast<std::size_t>(m)];
    const eq::MarketResponse at_br = eq::respond(cfg, ch, probe);
    const eq::MarketResponse at_ne = eq::respond(cfg, ch, res.prices);
    std::vector<double> v_br(static_cast<std::size_t>(cfg.M)), v_ne(static_cast<std::size_t>(cfg.M));
    std::vector<double> p_br(static_cast<std::size_t>(cfg.M)), p_ne(static_cast<std::size_t>(cfg.M));
    for (int m = 0; m < cfg.M; ++m) {
      v_br[static_cast<std::size_t>(m)] = at_br.V.at(m, n);
      v_ne[static_cast<std::size_t>(m)] = at_ne.V.at(m, n);
      p_br[static_cast<std::size_t>(m)] = probe.p.at(n, m);
      p_ne[static_cast<std::size_t>(m)] = res.prices.p.at(n, m);
    }
    const double u_br = eq::msp_utility(cfg.msps[static_cast<std::size_t>(n)], v_br, p_br);
    const double u_ne = eq::msp_utility(cfg.msps[static_cast<std::size_t>(n)], v_ne, p_ne);
    expect(u_br - u_ne <= 1e-6 * std::max(1.0, std::abs(u_ne)),
           "provider " + std::to_string(n) + " can still improve: " + num(u_ne) + " -> " + num(u_br));
  }
  detail = "converged in " + std::to_string(res.sweeps) + " sweeps; no provider can deviate";
}

void check_ne_multistart(std::uint64_t seed, bool quick, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng rng(seed, 47);
  const ChannelState ch = sample_channel(cfg, rng);
  const int starts = quick ? 3 : 5;
  std::vector<PriceMatrix> solutions;
  for (int s = 0; s < starts; ++s) {
    PriceMatrix init = eq::midpoint_prices(cfg);
    if (s > 0)
      for (int n = 0; n < cfg.N; ++n)
        for (int m = 0; m < cfg.M; ++m)
          init.p.at(n, m) = rng.uniform(cfg.msps[static_cast<std::size_t>(n)].p_min,
                                        cfg.msps[static_cast<std::size_t>(n)].p_max);
    const eq::EquilibriumResult res = eq::solve_ne(cfg, ch, init);
    expect(res.converged, "start " + std::to_string(s) + " did not converge");
    solutions.push_back(res.prices);
  }
  double worst = 0.0;
  for (std::size_t s = 1; s < solutions.size(); ++s)
    for (int n = 0; n < cfg.N; ++n)
      for (int m = 0; m < cfg.M; ++m) {
        const double a = solutions[0].p.at(n, m), b = solutions[s].p.at(n, m);
        const double rel = std::abs(a - b) / std::max(1.0, std::abs(a));
        worst = std::max(worst, rel);
        expect(rel < 1e-4, "fixed points disagree at (" + std::to_string(n) + "," +
                               std::to_string(m) + "): " + num(a) + " vs " + num(b));
      }
  detail = std::to_string(starts) + " starts agree; worst relative spread " + num(worst);
}

void check_value_monotonicity(std::uint64_t seed, bool quick, std::string& detail) {
  const int instances = quick ? 40 : 100;
  Rng rng(seed, 48);
  for (int i = 0; i < instances; ++i) {
    TradingConfig cfg = random_unit_instance(rng);
    Rng ch_rng = rng.child(static_cast<std::uint64_t>(i) + 1);
    const ChannelState ch = sample_channel(cfg, ch_rng);
    const double thr16 = participation_price16(cfg, ch, 0, 0);
    const double p0 = thr16 * rng.uniform(1.1, 3.0);
    const double h = 1e-4;
    auto value_at = [&](double p) {
      return eq::follower_best_response(cfg, ch, 0, std::vector<double>{p})[0].V;
    };
    const double vm = value_at(p0 - h), v0 = value_at(p0), vp = value_at(p0 + h);
    const double d1 = (vp - vm) / (2.0 * h);
    const double d2 = (vp - 2.0 * v0 + vm) / (h * h);
    expect(d1 > 0.0, "V'(p) not positive: " + num(d1) + " at p=" + num(p0));
    expect(d2 < 0.0, "V''(p) not negative: " + num(d2) + " at p=" + num(p0));
  }
  detail = std::to_string(instances) + " instances: delivered value rises, concavely";
}

void check_currency_scaling(std::uint64_t seed, bool, std::string& detail) {
  // Rescaling the currency unit (all costs, valuations, and the price band by
  // one factor) must leave the equilibrium allocation fixed and scale prices
  // and utilities linearly.
  const TradingConfig cfg = default_config(seed, 3, 2);
  Rng rng(seed, 58);
  const ChannelState ch = sample_channel(cfg, rng);
  const double k = 3.0;
  TradingConfig scaled = cfg;
  for (auto& mu : scaled.mus) {
    mu.c_f *= k;
    mu.c_B *= k;
  }
  for (auto& msp : scaled.msps) {
    msp.mu *= k;
    msp.p_min *= k;
    msp.p_max *= k;
  }
  const eq::EquilibriumResult base = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
  const eq::EquilibriumResult big = eq::solve_ne(scaled, ch, eq::midpoint_prices(scaled));
  expect(base.converged && big.converged, "rescaled instance did not converge");
  double worst = 0.0;
  auto rel_check = [&](double got, double want, const char* what) {
    const double rel = std::abs(got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, rel);
    expect(rel < 1e-4, std::string(what) + " not scale-consistent: " + num(got) + " vs " +
                           num(want));
  };
  for (int n = 0; n < cfg.N; ++n)
    for (int m = 0; m < cfg.M; ++m) {
      rel_check(big.prices.p.at(n, m), k * base.prices.p.at(n, m), "price");
      rel_check(big.alloc.f.at(m, n), base.alloc.f.at(m, n), "compute allocation");
      rel_check(big.alloc.B.at(m, n), base.alloc.B.at(m, n), "bandwidth allocation");
    }
  for (int n = 0; n < cfg.N; ++n)
    rel_check(big.msp_utilities[static_cast<std::size_t>(n)],
              k * base.msp_utilities[static_cast<std::size_t>(n)], "provider utility");
  for (int m = 0; m < cfg.M; ++m)
    rel_check(big.mu_utilities[static_cast<std::size_t>(m)],
              k * base.mu_utilities[static_cast<std::size_t>(m)], "user utility");
  detail = "x3 currency rescale: allocation fixed, prices/utilities linear (worst rel " +
           num(worst) + ")";
}

void check_net_gradients(std::uint64_t seed, bool quick, std::string& detail) {
  const int fixtures = quick ? 5 : 20;
  Rng rng(seed, 49);
  double worst = 0.0;
  for (int t = 0; t < fixtures; ++t) {
    net::Mlp netw({3, 5, 2}, net::Activation::Tanh, rng);
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    auto loss = [&]() {
      const std::vector<double> y = netw.forward(x);
      return 0.5 * (y[0] * y[0] + y[1] * y[1]);
    };
    net::Mlp grad = netw.zeros_like();
    net::Mlp::Trace trace;
    const std::vector<double> y = netw.forward(x, trace);
    netw.backward(trace, y, grad);
    for (std::size_t l = 0; l < netw.layers.size(); ++l) {
      auto check_param = [&](double& p, double g) {
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
        expect(rel < 1e-4, "gradient mismatch: fd=" + num(fd) + " bp=" + num(g));
      };
      for (std::size_t i = 0; i < netw.layers[l].W.size(); ++i)
        check_param(netw.layers[l].W[i], grad.layers[l].W[i]);
      for (std::size_t i = 0; i < netw.layers[l].b.size(); ++i)
        check_param(netw.layers[l].b[i], grad.layers[l].b[i]);
    }
  }
  detail = std::to_string(fixtures) + " fixtures, worst relative error " + num(worst);
}

void check_net_checkpoint(std::uint64_t seed, bool, std::string& detail) {
  Rng rng(seed, 50);
  net::Mlp a({4, 6, 3}, net::Activation::Tanh, rng);
  std::stringstream ss;
  a.save(ss);
  const net::Mlp b = net::Mlp::load(ss);
  expect(a.layers.size() == b.layers.size(), "layer count changed");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    expect(a.layers[l].W == b.layers[l].W, "weights changed in round-trip");
    expect(a.layers[l].b == b.layers[l].b, "biases changed in round-trip");
  }
  const std::vector<double> x{0.1, -0.4, 0.9, 0.3};
  expect(a.forward(x) == b.forward(x), "forward outputs differ after round-trip");
  detail = "text checkpoint round-trips bit-exactly";
}

void check_env_contract(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng rng(seed, 51);
  const ChannelState ch = sample_channel(cfg, rng);
  mddr::MarketEnv env(cfg, ch, rng.child(1));
  const auto obs = env.reset();
  const eq::MarketResponse resp = eq::respond(cfg, ch, eq::midpoint_prices(cfg));
  for (int n = 0; n < cfg.N; ++n)
    for (int m = 0; m < cfg.M; ++m)
      expect(obs[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)] == resp.V.at(m, n),
             "reset observation is not the delivered-value vector");

  const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
  const auto step1 = env.step(ne.prices);
  for (int n = 0; n < cfg.N; ++n)
    expect(std::abs(step1.utilities[static_cast<std::size_t>(n)] -
                    ne.msp_utilities[static_cast<std::size_t>(n)]) < 1e-9,
           "environment utility disagrees with equilibrium at its own prices");
  const auto step2 = env.step(ne.prices);
  expect(step1.utilities == step2.utilities, "static channel not stationary");
  detail = "reset/step agree with follower responses and utilities";
}

void check_agent_contract(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed, 3, 2);
  Rng rng(seed, 52);
  const ChannelState ch = sample_channel(cfg, rng);
  mddr::Hyperparams hp;
  hp.episode_len = 4;
  hp.buffer_capacity = 8;
  hp.minibatch = 4;
  hp.hidden = 8;
  mddr::MarketEnv env(cfg, ch, rng.child(1));
  mddr::PpoAgent agent(cfg.M, cfg.msps[0].p_min, cfg.msps[0].p_max, hp, rng.child(2));
  auto obs = env.reset();
  int updates = 0;
  for (int k = 0; k < 16; ++k) {
    const auto sample = agent.act(obs[0]);
    for (double p : sample.prices)
      expect(p >= cfg.msps[0].p_min && p <= cfg.msps[0].p_max, "emitted price out of bounds");
    PriceMatrix prices(cfg.N, cfg.M);
    for (int n = 0; n < cfg.N; ++n)
      for (int m = 0; m < cfg.M; ++m)
        prices.p.at(n, m) = sample.prices[static_cast<std::size_t>(m)];
    const auto step = env.step(prices);
    agent.record(sample, step.utilities[0], (k + 1) % hp.episode_len == 0);
    if (agent.maybe_update()) {
      ++updates;
      expect(agent.buffer_size() == 0, "buffer not cleared after update");
    }
    obs = step.obs;
  }
  expect(updates == 2, "expected 2 updates over 16 stages, got " + std::to_string(updates));

  // Learning rate 0: parameters must be bit-identical across an update.
  mddr::Hyperparams hp0 = hp;
  hp0.lr = 0.0;
  mddr::PpoAgent frozen(cfg.M, cfg.msps[0].p_min, cfg.msps[0].p_max, hp0, rng.child(3));
  const net::Mlp before = frozen.actor();
  obs = env.reset();
  while (!frozen.buffer_full()) {
    const auto sample = frozen.act(obs[0]);
    PriceMatrix prices(cfg.N, cfg.M);
    for (int n = 0; n < cfg.N; ++n)
      for (int m = 0; m < cfg.M; ++m)
        prices.p.at(n, m) = sample.prices[static_cast<std::size_t>(m)];
    const auto step = env.step(prices);
    frozen.record(sample, step.utilities[0], false);
    obs = step.obs;
  }
  expect(frozen.maybe_update(), "full buffer did not trigger update");
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    expect(before.layers[l].W == frozen.actor().layers[l].W, "lr=0 changed actor weights");
    expect(before.layers[l].b == frozen.actor().layers[l].b, "lr=0 changed actor biases");
  }
  detail = "bounds, buffer clearing, and lr=0 bit-stability hold";
}

void check_gae_oracle(std::uint64_t seed, bool, std::string& detail) {
  Rng rng(seed, 53);
  const std::size_t K = 12;
  std::vector<double> r(K), v(K);
  for (std::size_t k = 0; k < K; ++k) {
    r[k] = rng.normal();
    v[k] = rng.normal();
  }
  const double gamma = 0.95, lambda = 0.9;
  const mddr::GaeResult g = mddr::compute_gae(r, v, gamma, lambda);
  // Independent direct-sum oracle: A_k = sum_l (gamma*lambda)^(l-k) * delta_l.
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0, w = 1.0;
    for (std::size_t l = k; l < K; ++l) {
      const double next_v = (l + 1 < K) ? v[l + 1] : 0.0;
      acc += w * (r[l] + gamma * next_v - v[l]);
      w *= gamma * lambda;
    }
    expect(std::abs(acc - g.raw_advantages[k]) < 1e-10, "advantage recursion mismatch");
    expect(std::abs(g.returns[k] - (acc + v[k])) < 1e-10, "returns mismatch");
  }
  double mean = 0.0, var = 0.0;
  for (double a : g.advantages) mean += a;
  mean /= static_cast<double>(K);
  for (double a : g.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(K);
  expect(std::abs(mean) < 1e-9, "normalized advantages not centered");
  expect(std::abs(var - 1.0) < 1e-6, "normalized advantages not unit variance");
  const mddr::GaeResult zero = mddr::compute_gae(r, r, 0.0, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    expect(zero.raw_advantages[k] == 0.0, "gamma=lambda=0 with perfect values not zero");
  detail = "matches the unrolled recursion; normalization exact";
}

void check_ppo_flat_surrogate(std::uint64_t seed, bool, std::string& detail) {
  Rng rng(seed, 54);
  mddr::Hyperparams hp;
  hp.entropy_coef = 0.0;
  hp.gamma = 0.0;
  hp.gae_lambda = 0.0;
  hp.minibatch = 4;
  hp.update_epochs = 2;
  net::Mlp actor({2, 4, 4}, net::Activation::Tanh, rng);
  net::Mlp critic({2, 4, 1}, net::Activation::Tanh, rng);
  const net::Mlp actor_before = actor;
  net::Adam aopt(hp.lr), copt(hp.lr);
  std::vector<mddr::Transition> buffer;
  for (int k = 0; k < 8; ++k) {
    mddr::Transition t;
    t.obs = {rng.normal(), rng.normal()};
    const mddr::PolicyOut po = mddr::actor_forward(actor, t.obs, hp, rng);
    t.action_u = po.u;
    t.log_prob = po.log_prob;
    t.reward = rng.normal();
    t.value = t.reward;  // perfect critic at gamma=lambda=0 -> zero advantages
    t.episode_end = (k % 4) == 3;
    buffer.push_back(std::move(t));
  }
  Rng urng(seed, 55);
  mddr::ppo_update(actor, critic, aopt, copt, buffer, hp, urng);
  expect(buffer.empty(), "buffer not cleared");
  for (std::size_t l = 0; l < actor.layers.size(); ++l) {
    expect(actor.layers[l].W == actor_before.layers[l].W,
           "zero advantages moved actor weights");
    expect(actor.layers[l].b == actor_before.layers[l].b, "zero advantages moved actor biases");
  }
  detail = "zero-advantage buffer leaves the actor bit-identical (entropy off)";
}

void check_scheme_invariants(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng rng(seed, 56);
  const ChannelState ch = sample_channel(cfg, rng);
  const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
  double ne_total = 0.0;
  for (int m = 0; m < cfg.M; ++m)
    for (int n = 0; n < cfg.N; ++n) ne_total += ne.V.at(m, n);

  const schemes::SchemeKind kinds[] = {schemes::SchemeKind::XBased, schemes::SchemeKind::WBased,
                                       schemes::SchemeKind::WXBased, schemes::SchemeKind::Fixed};
  std::string totals;
  for (const auto kind : kinds) {
    schemes::BenchmarkScheme scheme{kind, seed};
    const schemes::SchemeOutcome out = schemes::run_scheme_market(cfg, ch, scheme);
    double total = 0.0;
    for (int m = 0; m < cfg.M; ++m) {
      const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
      double sum_f = 0.0, sum_B = 0.0;
      for (int n = 0; n < cfg.N; ++n) {
        sum_f += out.alloc.f.at(m, n);
        sum_B += out.alloc.B.at(m, n);
        if (!out.alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)])
          continue;
        total += out.V.at(m, n);
        expect(out.V.at(m, n) > 0.0, "scheme kept a nonpositive-value pair");
        const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
        const double t = iom::local_training_time(mu.theta, mu.x, msp.tau, out.alloc.f.at(m, n)) +
                         iom::upload_time(cfg.payload(m, n), out.alloc.B.at(m, n), ch.sinr.at(m, n));
        expect(t <= msp.tau * (1.0 + 1e-9), "scheme allocation misses deadline");
      }
      expect(sum_f < mu.f_max - mu.S / mu.T_req, "scheme C1/C3 compute violated");
      expect(sum_B < mu.B_max, "scheme C1 bandwidth violated");
    }
    expect(ne_total >= total - 1e-9 * std::max(1.0, total),
           std::string(schemes::scheme_name(kind)) + " total IoM " + num(total) +
               " exceeds equilibrium " + num(ne_total));
    totals += std::string(schemes::scheme_name(kind)) + "=" + num(total) + " ";
  }

  const std::vector<double> w1 = schemes::scheme_weights({schemes::SchemeKind::Fixed, 99}, cfg, 2);
  const std::vector<double> w2 = schemes::scheme_weights({schemes::SchemeKind::Fixed, 99}, cfg, 2);
  expect(w1 == w2, "fixed scheme weights not deterministic per seed");

  TradingConfig zero_omega = cfg;
  zero_omega.omega.at(0, 0) = 0.0;
  std::vector<double> prices(static_cast<std::size_t>(cfg.N), 1.0);
  const schemes::AllocationRow row =
      schemes::allocate({schemes::SchemeKind::WBased, 0}, zero_omega, ch, 0, prices);
  expect(!row.participating[0], "zero-weight pair still participates");
  detail = "equilibrium total " + num(ne_total) + " >= " + totals;
}

void check_flsim_events(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed, 3, 2);
  Rng rng(seed, 57);
  const ChannelState ch = sample_channel(cfg, rng);
  const eq::EquilibriumResult ne = eq::solve_ne(cfg, ch, eq::midpoint_prices(cfg));
  Rng fl_rng(seed, 58);
  const flsim::FlSetup setup = flsim::make_fl_setup(cfg, fl_rng);
  const flsim::FlRunResult run = flsim::run_synchronous_rounds(cfg, ch, setup, ne.alloc, fl_rng);

  for (std::size_t i = 1; i < run.events.size(); ++i)
    expect(run.events[i - 1].time <= run.events[i].time, "event log out of order");

  for (int n = 0; n < cfg.N; ++n) {
    const int rounds = static_cast<int>(std::floor(cfg.T / cfg.msps[static_cast<std::size_t>(n)].tau));
    for (int m = 0; m < cfg.M; ++m) {
      if (!ne.alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)]) continue;
      int received = 0;
      for (const auto& e : run.events)
        if (e.kind == flsim::FlEventKind::ModelReceived && e.mu == m && e.msp == n) {
          ++received;
          const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
          const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
          const double expected =
              e.round * msp.tau +
              iom::local_training_time(mu.theta, mu.x, msp.tau, ne.alloc.f.at(m, n)) +
              iom::upload_time(cfg.payload(m, n), ne.alloc.B.at(m, n), ch.sinr.at(m, n));
          expect(std::abs(e.time - expected) < 1e-9, "reception time off schedule");
        }
      expect(received == rounds, "pair (" + std::to_string(m) + "," + std::to_string(n) +
                                     ") received " + std::to_string(received) + " of " +
                                     std::to_string(rounds) + " rounds");
    }
    for (double a : run.acc_by_round[static_cast<std::size_t>(n)])
      expect(a >= 0.0 && a <= 1.0, "accuracy out of [0,1]");
  }

  // FedAvg stays inside the coordinatewise hull and matches a direct sum.
  Rng mr(seed, 59);
  std::vector<std::pair<flsim::ToyModel, double>> locals;
  for (int i = 0; i < 3; ++i)
    locals.emplace_back(flsim::ToyModel::random_init(4, 1.0, mr), static_cast<double>(i + 1));
  const flsim::ToyModel agg = flsim::fedavg_aggregate(flsim::ToyModel::zeros(4), locals);
  for (std::size_t j = 0; j < agg.w.size(); ++j) {
    double lo = 1e300, hi = -1e300, direct = 0.0;
    for (const auto& [model, size] : locals) {
      lo = std::min(lo, model.w[j]);
      hi = std::max(hi, model.w[j]);
      direct += size / 6.0 * model.w[j];
    }
    expect(agg.w[j] >= lo - 1e-12 && agg.w[j] <= hi + 1e-12, "aggregate left the hull");
    expect(std::abs(agg.w[j] - direct) < 1e-12, "aggregate differs from direct weighted sum");
  }

  // Data potential value is nonnegative and shrinks as the global improves.
  Rng probe_rng(seed, 60);
  double before = 0.0, after = 0.0;
  for (int m = 0; m < cfg.M; ++m) {
    const flsim::Dataset probe =
        flsim::synth_dataset(cfg.fl.d, 500, cfg.fl.separation,
                             cfg.fl.class1_prob[static_cast<std::size_t>(m)], probe_rng);
    before += iom::potential_value(flsim::predict(setup.global[0], probe), probe.y);
    after += iom::potential_value(flsim::predict(run.final_models[0], probe), probe.y);
    expect(before >= 0.0 && after >= 0.0, "potential value negative");
  }
  expect(after < before, "potential value did not shrink after training");
  detail = "event schedule exact; fedavg hull + oracle; omega " + num(before / cfg.M) + " -> " +
           num(after / cfg.M);
}

void check_flsim_aoi(std::uint64_t seed, bool, std::string& detail) {
  // Hand-sized single pair: tau=4, T_c=1, T_t=1 by construction.
  TradingConfig cfg = default_config(seed, 1, 1);
  cfg.mus[0].theta = std::exp(-1.0);  // ln(1/theta) = 1
  cfg.mus[0].x = 2.5e8;
  cfg.msps[0].tau = 4.0;
  cfg.msps[0].b = 6e5;
  cfg.T = 800.0;  // 200 rounds
  ChannelState ch;
  ch.sinr = Mat(1, 1, 1.0);  // log2(2) = 1
  Allocation alloc(1, 1);
  alloc.f.at(0, 0) = 1e9;  // T_c = 1*2.5e8*4/1e9 = 1
  alloc.B.at(0, 0) = 6e5;  // T_t = 6e5/(6e5*1) = 1
  alloc.participating[0][0] = true;

  Rng fl_rng(seed, 61);
  const flsim::FlSetup setup = flsim::make_fl_setup(cfg, fl_rng);
  const flsim::FlRunResult run = flsim::run_synchronous_rounds(cfg, ch, setup, alloc, fl_rng);
  const Mat avg = flsim::aoi_timeline(run.events, cfg.T, 1, 1);
  const double closed = iom::average_aoi(4.0, 1.0, 1.0);
  const double rel = std::abs(avg.at(0, 0) - closed) / closed;
  expect(rel < 0.01, "steady-state AoI off closed form by " + num(rel));

  const Mat empty_avg = flsim::aoi_timeline({}, 10.0, 1, 1);
  expect(std::abs(empty_avg.at(0, 0) - 5.0) < 1e-12, "zero-update AoI not horizon/2");

  std::vector<flsim::FlEvent> cycle = {{flsim::FlEventKind::TrainStart, 0.0, 0, 0, 0},
                                       {flsim::FlEventKind::ModelReceived, 2.0, 0, 0, 0},
                                       {flsim::FlEventKind::RoundDeadline, 4.0, -1, 0, 0}};
  const Mat one = flsim::aoi_timeline(cycle, 4.0, 1, 1);
  expect(std::abs(one.at(0, 0) - 2.0) < 1e-12, "single-cycle trapezoid wrong: " + num(one.at(0, 0)));
  detail = "200-round average within " + num(rel) + " of closed form; hand cases exact";
}

void check_determinism(std::uint64_t seed, bool, std::string& detail) {
  TradingConfig cfg = default_config(seed);
  Rng r1(cfg.seed, 7), r2(cfg.seed, 7);
  const ChannelState ch1 = sample_channel(cfg, r1);
  const ChannelState ch2 = sample_channel(cfg, r2);
  expect(ch1.sinr == ch2.sinr, "channel draw not reproducible");
  const eq::EquilibriumResult a = eq::solve_ne(cfg, ch1, eq::midpoint_prices(cfg));
  const eq::EquilibriumResult b = eq::solve_ne(cfg, ch2, eq::midpoint_prices(cfg));
  expect(a.prices.p == b.prices.p, "equilibrium prices not bit-identical across runs");

  TradingConfig other = default_config(seed + 1);
  Rng r3(other.seed, 7);
  const ChannelState ch3 = sample_channel(other, r3);
  const eq::EquilibriumResult c = eq::solve_ne(other, ch3, eq::midpoint_prices(other));
  expect(!(a.prices.p == c.prices.p), "different seeds produced identical prices");

  Rng f1(seed, 62), f2(seed, 62);
  TradingConfig small = default_config(seed, 2, 1);
  Rng cr(small.seed, 3);
  const ChannelState chs = sample_channel(small, cr);
  const eq::EquilibriumResult nes = eq::solve_ne(small, chs, eq::midpoint_prices(small));
  const flsim::FlSetup s1 = flsim::make_fl_setup(small, f1);
  const flsim::FlSetup s2 = flsim::make_fl_setup(small, f2);
  const flsim::FlRunResult run1 = flsim::run_synchronous_rounds(small, chs, s1, nes.alloc, f1);
  const flsim::FlRunResult run2 = flsim::run_synchronous_rounds(small, chs, s2, nes.alloc, f2);
  expect(run1.acc_by_round == run2.acc_by_round, "federated run not reproducible");
  detail = "same seed bit-identical, different seed differs";
}

}  // namespace

std::vector<CheckResult> run_all_checks(std::uint64_t seed, bool quick) {
  using Fn = std::function<void(std::uint64_t, bool, std::string&)>;
  const std::vector<std::pair<std::string, Fn>> checks = {
      {"rng.streams", check_rng_streams},
      {"config.roundtrip", check_config_roundtrip},
      {"config.validation", check_config_validation},
      {"iom.identities", check_iom_identities},
      {"follower.grid-dominance", check_grid_dominance},
      {"follower.branch-continuity", check_branch_continuity},
      {"follower.rationality", check_follower_rationality},
      {"follower.budget-feasibility", check_budget_feasibility},
      {"market.concavity", check_concavity},
      {"verify.hessian-sensitivity", check_hessian_sensitivity},
      {"equilibrium.fixed-point", check_ne_fixed_point},
      {"equilibrium.multistart", check_ne_multistart},
      {"equilibrium.value-monotonicity", check_value_monotonicity},
      {"equilibrium.currency-scaling", check_currency_scaling},
      {"net.gradcheck", check_net_gradients},
      {"net.checkpoint", check_net_checkpoint},
      {"mddr.env-contract", check_env_contract},
      {"mddr.agent-contract", check_agent_contract},
      {"mddr.gae-oracle", check_gae_oracle},
      {"mddr.flat-surrogate", check_ppo_flat_surrogate},
      {"schemes.invariants", check_scheme_invariants},
      {"flsim.events", check_flsim_events},
      {"flsim.aoi", check_flsim_aoi},
      {"harness.determinism", check_determinism},
  };

  std::vector<CheckResult> results;
  results.reserve(checks.size());
  for (const auto& [name, fn] : checks) {
    CheckResult r;
    r.name = name;
    try {
      fn(seed, quick, r.detail);
      r.pass = true;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace iomarket::verify
