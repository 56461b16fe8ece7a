#include "iomarket/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "iomarket/golden.hpp"

namespace iomarket::eq {

namespace {

constexpr double kBudgetMargin = 0.999;  // keeps strict C1/C3 inequalities strict at the boundary
constexpr double kC2Slack = 1e-9;        // relative slack when checking the deadline

// Per-pair constants of the follower problem, hoisted out of the formulas.
struct PairParams {
  double I;    // predicted contribution
  double a1;   // x * tau * ln(1/theta); T_c = a1 / f
  double bt;   // b / log2(1+sinr);      T_t = bt / B
  double a2;   // log2(1+sinr)
  double L;    // ln(1/theta)
  double cf, cB, tau, x, b;
  double F;
};

PairParams pair_params(const TradingConfig& cfg, const ChannelState& ch, int m, int n) {
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  PairParams pp;
  pp.L = std::log(1.0 / mu.theta);
  pp.tau = msp.tau;
  pp.x = mu.x;
  pp.b = cfg.payload(m, n);
  pp.cf = mu.c_f;
  pp.cB = mu.c_B;
  pp.a2 = std::log2(1.0 + ch.sinr.at(m, n));
  pp.a1 = mu.x * msp.tau * pp.L;
  pp.bt = pp.b / pp.a2;
  pp.I = iom::contribution_prediction(cfg.omega.at(m, n), mu.theta, mu.x, msp.tau, cfg.T,
                                      msp.epsilon, msp.eta);
  pp.F = pp.L * std::sqrt(mu.x * pp.cf / msp.tau) + std::sqrt(pp.b * pp.cB) / (msp.tau * std::sqrt(pp.a2));
  return pp;
}

// V and surplus at an explicit (f, B) for precomputed pair constants.
double value_at(const PairParams& pp, double f, double B) {
  return pp.I * (pp.tau / 2.0 - pp.a1 / f - pp.bt / B);
}

double cost_at(const PairParams& pp, double f, double B) { return pp.cf * pp.L * f + pp.cB * B; }

FollowerResponse branch_point(const PairParams& pp, double price) {
  FollowerResponse r;
  r.F = pp.F;
  if (!(price > 0.0) || !(pp.I > 0.0)) return r;  // withheld
  const double threshold = pp.F * pp.F / pp.I;
  if (price >= threshold) {
    r.branch = Branch::Interior;
    r.delta = 0.0;
    r.f = std::sqrt(price * pp.I * pp.x * pp.tau / pp.cf);
    r.B = std::sqrt(price * pp.I * pp.b / (pp.cB * pp.a2));
  } else {
    r.branch = Branch::DeadlineBound;
    r.delta = pp.F * pp.F - price * pp.I;
    r.f = pp.F * std::sqrt(pp.x * pp.tau / pp.cf);
    r.B = pp.F * std::sqrt(pp.b / (pp.cB * pp.a2));
  }
  r.V = value_at(pp, r.f, r.B);
  r.net = price * r.V - cost_at(pp, r.f, r.B);
  return r;
}

void withhold(FollowerResponse& r) {
  r.f = 0.0;
  r.B = 0.0;
  r.V = 0.0;
  r.net = 0.0;
  r.delta = 0.0;
  r.branch = Branch::Withheld;
}

double follower_f_budget(const MuProfile& mu) { return mu.f_max - mu.S / mu.T_req; }

// Projection of y onto {z_i >= floor, sum z <= cap} (all in normalized units).
void project_block(std::vector<double>& z, double floor_, double cap) {
  double sum = 0.0;
  for (double& zi : z) {
    zi = std::max(zi, floor_);
    sum += zi;
  }
  if (sum <= cap) return;
  // Solve sum_i max(floor, y_i - lambda) = cap by bisection; the left side is
  // continuous and strictly decreasing until it hits k*floor.
  double lo = 0.0, hi = 0.0;
  for (double zi : z) hi = std::max(hi, zi - floor_);
  for (int it = 0; it < 200; ++it) {
    const double lambda = 0.5 * (lo + hi);
    double s = 0.0;
    for (double zi : z) s += std::max(floor_, zi - lambda);
    if (s > cap)
      lo = lambda;
    else
      hi = lambda;
  }
  for (double& zi : z) zi = std::max(floor_, zi - hi);
}

}  // namespace

double pair_threshold_F(const TradingConfig& cfg, const ChannelState& ch, int m, int n) {
  return pair_params(cfg, ch, m, n).F;
}

FollowerResponse follower_branch_point(const TradingConfig& cfg, const ChannelState& ch, int m,
                                       int n, double price) {
  return branch_point(pair_params(cfg, ch, m, n), price);
}

double pair_surplus(const TradingConfig& cfg, const ChannelState& ch, int m, int n, double price,
                    double f, double B) {
  const PairParams pp = pair_params(cfg, ch, m, n);
  return price * value_at(pp, f, B) - cost_at(pp, f, B);
}

std::vector<FollowerResponse> follower_best_response(const TradingConfig& cfg,
                                                     const ChannelState& ch, int m,
                                                     std::span<const double> prices) {
  const int N = cfg.N;
  if (static_cast<int>(prices.size()) != N) throw DomainError("follower_best_response: price row size");
  std::vector<FollowerResponse> rs(static_cast<std::size_t>(N));
  double sum_f = 0.0, sum_B = 0.0;
  for (int n = 0; n < N; ++n) {
    FollowerResponse& r = rs[static_cast<std::size_t>(n)];
    r = branch_point(pair_params(cfg, ch, m, n), prices[static_cast<std::size_t>(n)]);
    if (r.branch != Branch::Withheld && (r.V <= 0.0 || r.net <= 0.0)) withhold(r);
    sum_f += r.f;
    sum_B += r.B;
  }
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  if (sum_f < follower_f_budget(mu) && sum_B < mu.B_max) return rs;
  return coupled_follower_response(cfg, ch, m, prices);
}

std::vector<FollowerResponse> coupled_follower_response(const TradingConfig& cfg,
                                                        const ChannelState& ch, int m,
                                                        std::span<const double> prices) {
  const int N = cfg.N;
  if (static_cast<int>(prices.size()) != N) throw DomainError("coupled_follower_response: price row size");
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const double Fb = kBudgetMargin * follower_f_budget(mu);
  const double Bb = kBudgetMargin * mu.B_max;
  if (!(Fb > 0.0) || !(Bb > 0.0)) throw NoFeasiblePoint("follower budgets are empty");

  std::vector<PairParams> pp;
  pp.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) pp.push_back(pair_params(cfg, ch, m, n));

  // Decoupled interior optima are the scaling base; pairs that would not trade
  // even with slack budgets are dropped up front (coupling only shrinks the
  // feasible set, so a nonpositive decoupled surplus stays nonpositive).
  std::vector<FollowerResponse> rs(static_cast<std::size_t>(N));
  std::vector<double> base_f(static_cast<std::size_t>(N), 0.0);
  std::vector<double> base_B(static_cast<std::size_t>(N), 0.0);
  std::vector<int> active;
  for (int n = 0; n < N; ++n) {
    FollowerResponse& r = rs[static_cast<std::size_t>(n)];
    r = branch_point(pp[static_cast<std::size_t>(n)], prices[static_cast<std::size_t>(n)]);
    r.coupled = true;
    if (r.branch == Branch::Withheld || r.V <= 0.0 || r.net <= 0.0) {
      withhold(r);
    } else {
      base_f[static_cast<std::size_t>(n)] = r.f;
      base_B[static_cast<std::size_t>(n)] = r.B;
      active.push_back(n);
    }
  }

  while (!active.empty()) {
    double sum_f = 0.0, sum_B = 0.0;
    for (int n : active) {
      sum_f += base_f[static_cast<std::size_t>(n)];
      sum_B += base_B[static_cast<std::size_t>(n)];
    }
    const double scale_f = sum_f > Fb ? Fb / sum_f : 1.0;
    const double scale_B = sum_B > Bb ? Bb / sum_B : 1.0;

    std::vector<int> keep;
    bool dropped = false;
    for (int n : active) {
      const PairParams& q = pp[static_cast<std::size_t>(n)];
      const double price = prices[static_cast<std::size_t>(n)];
      const double f = base_f[static_cast<std::size_t>(n)] * scale_f;
      const double B = base_B[static_cast<std::size_t>(n)] * scale_B;
      const double V = value_at(q, f, B);
      const double net = price * V - cost_at(q, f, B);
      FollowerResponse& r = rs[static_cast<std::size_t>(n)];
      if (V <= 0.0 || net <= 0.0) {
        withhold(r);
        r.coupled = true;
        dropped = true;
      } else {
        r.f = f;
        r.B = B;
        r.V = V;
        r.net = net;
        r.branch = Branch::Interior;
        r.delta = 0.0;
        r.coupled = true;
        keep.push_back(n);
      }
    }
    if (!dropped) break;
    active = keep;
  }
  return rs;
}

std::vector<FollowerResponse> projected_gradient_follower(const TradingConfig& cfg,
                                                          const ChannelState& ch, int m,
                                                          std::span<const double> prices,
                                                          double step, int max_iters) {
  const int N = cfg.N;
  if (static_cast<int>(prices.size()) != N) throw DomainError("projected_gradient_follower: price row size");
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const double Fb = kBudgetMargin * follower_f_budget(mu);
  const double Bb = kBudgetMargin * mu.B_max;
  if (!(Fb > 0.0) || !(Bb > 0.0)) throw NoFeasiblePoint("follower budgets are empty");

  std::vector<PairParams> pp;
  pp.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) pp.push_back(pair_params(cfg, ch, m, n));

  std::vector<FollowerResponse> rs(static_cast<std::size_t>(N));
  std::vector<int> active;
  for (int n = 0; n < N; ++n) {
    FollowerResponse& r = rs[static_cast<std::size_t>(n)];
    r = branch_point(pp[static_cast<std::size_t>(n)], prices[static_cast<std::size_t>(n)]);
    r.coupled = true;
    if (r.branch == Branch::Withheld || r.V <= 0.0 || r.net <= 0.0)
      withhold(r);
    else
      active.push_back(n);
  }

  constexpr double kFloor = 1e-12;
  while (!active.empty()) {
    const std::size_t k = active.size();
    // Normalized variables: z = [f_j / Fb ..., B_j / Bb ...].
    std::vector<double> z(2 * k);
    {
      double su = 0.0, sw = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        z[j] = rs[static_cast<std::size_t>(active[j])].f / Fb;
        z[k + j] = rs[static_cast<std::size_t>(active[j])].B / Bb;
        su += z[j];
        sw += z[k + j];
      }
      // Start strictly inside the budget region.
      if (su >= 1.0)
        for (std::size_t j = 0; j < k; ++j) z[j] *= 0.98 / su;
      if (sw >= 1.0)
        for (std::size_t j = 0; j < k; ++j) z[k + j] *= 0.98 / sw;
    }

    auto phi = [&](const std::vector<double>& zz) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const PairParams& q = pp[static_cast<std::size_t>(active[j])];
        const double price = prices[static_cast<std::size_t>(active[j])];
        const double f = zz[j] * Fb;
        const double B = zz[k + j] * Bb;
        total += price * value_at(q, f, B) - cost_at(q, f, B);
      }
      return total;
    };
    auto grad = [&](const std::vector<double>& zz, std::vector<double>& g) {
      for (std::size_t j = 0; j < k; ++j) {
        const PairParams& q = pp[static_cast<std::size_t>(active[j])];
        const double price = prices[static_cast<std::size_t>(active[j])];
        const double f = zz[j] * Fb;
        const double B = zz[k + j] * Bb;
        g[j] = (price * q.I * q.a1 / (f * f) - q.cf * q.L) * Fb;
        g[k + j] = (price * q.I * q.bt / (B * B) - q.cB) * Bb;
      }
    };
    auto project = [&](std::vector<double>& zz) {
      std::vector<double> u(zz.begin(), zz.begin() + static_cast<std::ptrdiff_t>(k));
      std::vector<double> w(zz.begin() + static_cast<std::ptrdiff_t>(k), zz.end());
      project_block(u, kFloor, 1.0);
      project_block(w, kFloor, 1.0);
      std::copy(u.begin(), u.end(), zz.begin());
      std::copy(w.begin(), w.end(), zz.begin() + static_cast<std::ptrdiff_t>(k));
    };

    project(z);
    std::vector<double> g(2 * k), trial(2 * k), probe(2 * k);
    double fz = phi(z);
    double t = step;
    for (int it = 0; it < max_iters; ++it) {
      grad(z, g);
      // Projected-gradient norm on a short probe arc.
      constexpr double kProbe = 1e-7;
      for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = z[i] + kProbe * g[i];
      project(probe);
      double pg2 = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i) {
        const double d = (probe[i] - z[i]) / kProbe;
        pg2 += d * d;
      }
      if (std::sqrt(pg2) < 1e-8) break;

      // Armijo backtracking along the projection arc; the step re-expands
      // after each success so progress stays fast once curvature is local.
      bool moved = false;
      t = std::min(t * 2.0, 1e6);
      while (t > 1e-16) {
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = z[i] + t * g[i];
        project(trial);
        double dir = 0.0;
        for (std::size_t i = 0; i < trial.size(); ++i) dir += g[i] * (trial[i] - z[i]);
        const double ft = phi(trial);
        if (ft >= fz + 1e-4 * dir && ft > fz - 1e-18) {
          z = trial;
          fz = ft;
          moved = true;
          break;
        }
        t /= 2.0;
      }
      if (!moved) break;
    }

    // Withhold pairs whose surplus is nonpositive at the coupled optimum and
    // re-solve; a dropped pair only frees budget, so this terminates.
    std::vector<int> keep;
    bool dropped = false;
    for (std::size_t j = 0; j < k; ++j) {
      const int n = active[j];
      const PairParams& q = pp[static_cast<std::size_t>(n)];
      const double price = prices[static_cast<std::size_t>(n)];
      const double f = z[j] * Fb;
      const double B = z[k + j] * Bb;
      const double V = value_at(q, f, B);
      const double net = price * V - cost_at(q, f, B);
      FollowerResponse& r = rs[static_cast<std::size_t>(n)];
      if (V <= 0.0 || net <= 0.0) {
        withhold(r);
        r.coupled = true;
        dropped = true;
      } else {
        r.f = f;
        r.B = B;
        r.V = V;
        r.net = net;
        r.branch = Branch::Interior;
        r.delta = 0.0;
        r.coupled = true;
        keep.push_back(n);
      }
    }
    if (!dropped) break;
    active = keep;
  }
  return rs;
}

double mu_cost(const MuProfile& mu, double f, double B) {
  if (f < 0.0 || B < 0.0) throw DomainError("mu_cost: negative resources");
  return mu.c_f * std::log(1.0 / mu.theta) * f + mu.c_B * B;
}

double mu_utility(const TradingConfig& cfg, const ChannelState& ch, int m,
                  std::span<const double> prices, std::span<const double> f_row,
                  std::span<const double> B_row) {
  const int N = cfg.N;
  if (static_cast<int>(prices.size()) != N || static_cast<int>(f_row.size()) != N ||
      static_cast<int>(B_row.size()) != N)
    throw DomainError("mu_utility: row sizes must equal N");
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  double sum_f = 0.0, sum_B = 0.0;
  for (int n = 0; n < N; ++n) {
    if (f_row[static_cast<std::size_t>(n)] < 0.0 || B_row[static_cast<std::size_t>(n)] < 0.0)
      throw InfeasibleAllocation("C1");
    sum_f += f_row[static_cast<std::size_t>(n)];
    sum_B += B_row[static_cast<std::size_t>(n)];
  }
  if (!(sum_f < mu.f_max) || !(sum_B < mu.B_max)) throw InfeasibleAllocation("C1");
  if (!(mu.S / (mu.f_max - sum_f) < mu.T_req)) throw InfeasibleAllocation("C3");

  double util = 0.0;
  for (int n = 0; n < N; ++n) {
    const double f = f_row[static_cast<std::size_t>(n)];
    const double B = B_row[static_cast<std::size_t>(n)];
    if (f == 0.0 && B == 0.0) continue;  // non-participating pair
    if (!(f > 0.0) || !(B > 0.0)) throw InfeasibleAllocation("C2");
    const PairParams pp = pair_params(cfg, ch, m, n);
    const double elapsed = pp.a1 / f + pp.bt / B;
    if (elapsed > pp.tau * (1.0 + kC2Slack)) throw InfeasibleAllocation("C2");
    util += prices[static_cast<std::size_t>(n)] * value_at(pp, f, B) - cost_at(pp, f, B);
  }
  return util;
}

double msp_utility(const MspProfile& msp, std::span<const double> V_col,
                   std::span<const double> p_col) {
  if (V_col.size() != p_col.size()) throw LengthMismatch();
  double sum_v = 0.0, paid = 0.0;
  for (std::size_t m = 0; m < V_col.size(); ++m) {
    sum_v += V_col[m];
    paid += p_col[m] * V_col[m];
  }
  if (!(1.0 + sum_v > 0.0)) throw DomainError("msp_utility: aggregate value at or below -1");
  return msp.mu * std::log1p(sum_v) - paid;
}

MarketResponse respond(const TradingConfig& cfg, const ChannelState& ch, const PriceMatrix& prices) {
  if (prices.p.rows != cfg.N || prices.p.cols != cfg.M)
    throw DomainError("respond: price matrix must be N x M");
  MarketResponse out;
  out.alloc = Allocation(cfg.M, cfg.N);
  out.V = Mat(cfg.M, cfg.N);
  out.detail.resize(static_cast<std::size_t>(cfg.M));
  out.mu_utilities.assign(static_cast<std::size_t>(cfg.M), 0.0);
  for (int m = 0; m < cfg.M; ++m) {
    const auto row = prices.mu_prices(m);
    auto rs = follower_best_response(cfg, ch, m, row);
    double util = 0.0;
    for (int n = 0; n < cfg.N; ++n) {
      const FollowerResponse& r = rs[static_cast<std::size_t>(n)];
      out.alloc.f.at(m, n) = r.f;
      out.alloc.B.at(m, n) = r.B;
      out.alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
          r.branch != Branch::Withheld;
      out.V.at(m, n) = r.V;
      util += r.net;
    }
    out.mu_utilities[static_cast<std::size_t>(m)] = util;
    out.detail[static_cast<std::size_t>(m)] = std::move(rs);
  }
  return out;
}

std::vector<double> msp_best_response(const TradingConfig& cfg, const ChannelState& ch, int n,
                                      const PriceMatrix& prices, double tol) {
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  PriceMatrix work = prices;
  const double price_scale = std::max(1e-300, std::max(msp.p_max, std::abs(msp.p_min)));

  // Current responses of every user to `work`; only user m's entry changes
  // while coordinate m is searched, because follower coupling is within-user.
  std::vector<std::vector<FollowerResponse>> resp(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m)
    resp[static_cast<std::size_t>(m)] = follower_best_response(cfg, ch, m, work.mu_prices(m));

  constexpr int kMaxCoordinateSweeps = 60;
  for (int sweep = 0; sweep < kMaxCoordinateSweeps; ++sweep) {
    double max_move = 0.0;
    for (int m = 0; m < cfg.M; ++m) {
      double rest_v = 0.0, rest_pv = 0.0;
      for (int mm = 0; mm < cfg.M; ++mm) {
        if (mm == m) continue;
        const double v = resp[static_cast<std::size_t>(mm)][static_cast<std::size_t>(n)].V;
        rest_v += v;
        rest_pv += work.p.at(n, mm) * v;
      }
      auto row = work.mu_prices(m);
      auto eval = [&](double p) {
        row[static_cast<std::size_t>(n)] = p;
        const auto rs = follower_best_response(cfg, ch, m, row);
        const double v = rs[static_cast<std::size_t>(n)].V;
        return msp.mu * std::log1p(rest_v + v) - (rest_pv + p * v);
      };
      const double old_p = work.p.at(n, m);
      const double new_p = scan_then_golden_max(eval, msp.p_min, msp.p_max, 17, tol);
      work.p.at(n, m) = new_p;
      row[static_cast<std::size_t>(n)] = new_p;
      resp[static_cast<std::size_t>(m)] = follower_best_response(cfg, ch, m, row);
      max_move = std::max(max_move, std::abs(new_p - old_p));
    }
    if (max_move < 1e-7 * price_scale) break;
  }

  std::vector<double> out(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) out[static_cast<std::size_t>(m)] = work.p.at(n, m);
  return out;
}

PriceMatrix midpoint_prices(const TradingConfig& cfg) {
  PriceMatrix prices(cfg.N, cfg.M);
  for (int n = 0; n < cfg.N; ++n)
    for (int m = 0; m < cfg.M; ++m)
      prices.p.at(n, m) = 0.5 * (cfg.msps[static_cast<std::size_t>(n)].p_min +
                                 cfg.msps[static_cast<std::size_t>(n)].p_max);
  return prices;
}

EquilibriumResult solve_ne(const TradingConfig& cfg, const ChannelState& ch,
                           const PriceMatrix& initial, double tol, int max_sweeps) {
  if (initial.p.rows != cfg.N || initial.p.cols != cfg.M)
    throw DomainError("solve_ne: initial prices must be N x M");
  EquilibriumResult result;
  result.prices = initial;

  // Damped Gauss-Seidel over a portfolio of damping factors. The convergence
  // test is on the undamped best-response residual, so `converged` certifies
  // an eps-equilibrium no matter which phase produced it. A best-response map
  // that cycles at one damping level usually contracts at another, and which
  // level works depends on the start, so the main phases re-run the ladder
  // from the caller's initial point and a short polish ladder afterwards
  // restarts from the lowest-residual iterate seen anywhere.
  constexpr double kMainLadder[] = {1.0, 0.8, 0.85, 0.6, 0.9, 0.7, 0.5, 0.4};
  constexpr double kPolishLadder[] = {0.8, 0.5, 0.35, 0.25};
  constexpr int kMain = static_cast<int>(std::size(kMainLadder));
  constexpr int kPolish = static_cast<int>(std::size(kPolishLadder));
  const int main_budget = std::max(60, (3 * max_sweeps / 4) / kMain);
  const int polish_budget = std::max(40, (max_sweeps / 4) / kPolish);
  double best_res = std::numeric_limits<double>::infinity();
  PriceMatrix best_prices = result.prices;
  int sweeps_used = 0;

  auto run_phase = [&](double alpha, const PriceMatrix& start, int budget) {
    result.prices = start;
    for (int i = 0; i < budget && sweeps_used < max_sweeps; ++i) {
      const PriceMatrix pre = result.prices;
      double max_rel = 0.0;
      for (int n = 0; n < cfg.N; ++n) {
        const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
        // Residual is relative to the provider's price scale so the stopping
        // rule is invariant under a rescaling of the currency unit.
        const double scale = std::max(1e-300, std::max(msp.p_max, std::abs(msp.p_min)));
        const auto row = msp_best_response(cfg, ch, n, result.prices, 1e-8 * scale);
        for (int m = 0; m < cfg.M; ++m) {
          const double old_p = result.prices.p.at(n, m);
          const double new_p = row[static_cast<std::size_t>(m)];
          max_rel = std::max(max_rel, std::abs(new_p - old_p) / scale);
          result.prices.p.at(n, m) = old_p + alpha * (new_p - old_p);
        }
      }
      result.sweeps = ++sweeps_used;
      if (max_rel < best_res) {
        best_res = max_rel;
        best_prices = pre;
      }
      if (max_rel < tol) {
        result.prices = pre;  // the point the residual certifies
        result.converged = true;
        return;
      }
    }
  };

  for (int phase = 0; phase < kMain && sweeps_used < max_sweeps && !result.converged; ++phase)
    run_phase(kMainLadder[phase], initial, main_budget);
  for (int phase = 0; phase < kPolish && sweeps_used < max_sweeps && !result.converged; ++phase)
    run_phase(kPolishLadder[phase], best_prices, polish_budget);
  if (!result.converged) result.prices = best_prices;

  MarketResponse mr = respond(cfg, ch, result.prices);
  result.alloc = std::move(mr.alloc);
  result.V = std::move(mr.V);
  result.mu_utilities = std::move(mr.mu_utilities);
  result.msp_utilities.assign(static_cast<std::size_t>(cfg.N), 0.0);
  for (int n = 0; n < cfg.N; ++n) {
    std::vector<double> v_col(static_cast<std::size_t>(cfg.M)), p_col(static_cast<std::size_t>(cfg.M));
    for (int m = 0; m < cfg.M; ++m) {
      v_col[static_cast<std::size_t>(m)] = result.V.at(m, n);
      p_col[static_cast<std::size_t>(m)] = result.prices.p.at(n, m);
    }
    result.msp_utilities[static_cast<std::size_t>(n)] =
        msp_utility(cfg.msps[static_cast<std::size_t>(n)], v_col, p_col);
  }
  return result;
}

}  // namespace iomarket::eq
