#include "iomarket/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace iomarket::verify {

double fd_hessian_max_eigenvalue(const std::function<double(std::span<const double>)>& fn,
                                 std::span<const double> x, std::span<const double> scale,
                                 double h) {
  const int d = static_cast<int>(x.size());
  if (static_cast<int>(scale.size()) != d) throw DomainError("fd_hessian: scale size mismatch");
  std::vector<double> p(x.begin(), x.end());
  auto eval = [&](const std::vector<double>& q) { return fn(std::span<const double>(q)); };

  Eigen::MatrixXd H(d, d);
  const double f0 = eval(p);
  for (int i = 0; i < d; ++i) {
    const double hi = h * scale[static_cast<std::size_t>(i)];
    // Diagonal: (f(x+h) - 2 f(x) + f(x-h)) / h^2 in scaled units.
    std::vector<double> q = p;
    q[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)] + hi;
    const double fp = eval(q);
    q[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)] - hi;
    const double fm = eval(q);
    H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (int j = i + 1; j < d; ++j) {
      const double hj = h * scale[static_cast<std::size_t>(j)];
      std::vector<double> r = p;
      r[static_cast<std::size_t>(i)] += hi;
      r[static_cast<std::size_t>(j)] += hj;
      const double fpp = eval(r);
      r[static_cast<std::size_t>(j)] -= 2.0 * hj;
      const double fpm = eval(r);
      r[static_cast<std::size_t>(i)] -= 2.0 * hi;
      const double fmm = eval(r);
      r[static_cast<std::size_t>(j)] += 2.0 * hj;
      const double fmp = eval(r);
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

GridBest grid_oracle_follower(const TradingConfig& cfg, const ChannelState& ch, int m, int n,
                              double price, double f_cap, double B_cap, int n_grid) {
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  // Everything below is recomputed from raw profile fields on purpose: this
  // oracle must not share the solver's formula helpers.
  const double L = std::log(1.0 / mu.theta);
  const double a2 = std::log2(1.0 + ch.sinr.at(m, n));
  const double rounds = std::floor(cfg.T / msp.tau);
  const double I =
      cfg.omega.at(m, n) * msp.epsilon * std::log(1.0 + msp.eta * rounds * mu.x * msp.tau) / mu.theta;
  const double b = cfg.payload(m, n);

  GridBest best;  // withholding (f = B = 0, utility 0) is always available
  for (int i = 1; i <= n_grid; ++i) {
    const double f = f_cap * i / n_grid;
    const double T_c = L * mu.x * msp.tau / f;
    if (T_c > msp.tau) continue;  // no bandwidth can rescue this point
    for (int j = 1; j <= n_grid; ++j) {
      const double B = B_cap * j / n_grid;
      const double T_t = b / (B * a2);
      if (T_c + T_t > msp.tau) continue;  // deadline-infeasible
      const double V = I * (msp.tau - (msp.tau / 2.0 + T_c + T_t));
      const double util = price * V - (mu.c_f * L * f + mu.c_B * B);
      if (util > best.utility) {
        best.utility = util;
        best.f = f;
        best.B = B;
      }
    }
  }
  return best;
}

double grid_price_argmax(const TradingConfig& cfg, const ChannelState& ch, int n, int m,
                         const PriceMatrix& prices, int n_grid) {
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  double rest_v = 0.0, rest_pv = 0.0;
  for (int mm = 0; mm < cfg.M; ++mm) {
    if (mm == m) continue;
    const auto rs = eq::follower_best_response(cfg, ch, mm, prices.mu_prices(mm));
    rest_v += rs[static_cast<std::size_t>(n)].V;
    rest_pv += prices.p.at(n, mm) * rs[static_cast<std::size_t>(n)].V;
  }
  auto row = prices.mu_prices(m);
  double best_p = msp.p_min, best_u = -1e300;
  for (int i = 0; i < n_grid; ++i) {
    const double p = msp.p_min + (msp.p_max - msp.p_min) * i / (n_grid - 1);
    row[static_cast<std::size_t>(n)] = p;
    const auto rs = eq::follower_best_response(cfg, ch, m, row);
    const double v = rs[static_cast<std::size_t>(n)].V;
    const double u = msp.mu * std::log1p(rest_v + v) - (rest_pv + p * v);
    if (u > best_u) {
      best_u = u;
      best_p = p;
    }
  }
  return best_p;
}

namespace {

// Interior participation threshold for pair (m, n): below 16 F^2 / I the
// user's surplus at the branch point is nonpositive and the pair withholds.
double participation_price(const TradingConfig& cfg, const ChannelState& ch, int m, int n) {
  const double F = eq::pair_threshold_F(cfg, ch, m, n);
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  const double I = iom::contribution_prediction(cfg.omega.at(m, n), mu.theta, mu.x, msp.tau, cfg.T,
                                                msp.epsilon, msp.eta);
  if (!(I > 0.0)) return 1e300;
  return 16.0 * F * F / I;
}

// Highest price at which pair (m, n)'s decoupled interior point still leaves
// head-room inside both budgets (so best responses stay smooth around it).
double smooth_price_cap(const TradingConfig& cfg, const ChannelState& ch, int m, int n,
                        double budget_frac) {
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  const double I = iom::contribution_prediction(cfg.omega.at(m, n), mu.theta, mu.x, msp.tau, cfg.T,
                                                msp.epsilon, msp.eta);
  if (!(I > 0.0)) return 0.0;
  const double a2 = std::log2(1.0 + ch.sinr.at(m, n));
  const double f_share = budget_frac * (mu.f_max - mu.S / mu.T_req) / cfg.N;
  const double B_share = budget_frac * mu.B_max / cfg.N;
  const double cap_f = f_share * f_share * mu.c_f / (I * mu.x * msp.tau);
  const double cap_B = B_share * B_share * mu.c_B * a2 / (I * cfg.payload(m, n));
  return std::min(cap_f, cap_B);
}

}  // namespace

ConcavityReport verify_concavity(const TradingConfig& cfg, const ChannelState& ch, int samples,
                                 Rng& rng, double tolerance) {
  ConcavityReport report;
  report.samples = samples;

  // User side: Hessian of the surplus in (f_row, B_row) at random positive
  // allocations strictly inside the budgets.
  for (int s = 0; s < samples; ++s) {
    const int m = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.M)));
    const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
    const double Fb = mu.f_max - mu.S / mu.T_req;
    const double Bb = mu.B_max;
    std::vector<double> point(2 * static_cast<std::size_t>(cfg.N));
    std::vector<double> prices(static_cast<std::size_t>(cfg.N));
    for (int n = 0; n < cfg.N; ++n) {
      point[static_cast<std::size_t>(n)] = rng.uniform(0.05, 0.8) * Fb / cfg.N;
      point[static_cast<std::size_t>(cfg.N + n)] = rng.uniform(0.05, 0.8) * Bb / cfg.N;
      const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
      prices[static_cast<std::size_t>(n)] = rng.uniform(msp.p_min, msp.p_max);
    }
    auto phi = [&](std::span<const double> z) {
      double total = 0.0;
      for (int n = 0; n < cfg.N; ++n)
        total += eq::pair_surplus(cfg, ch, m, n, prices[static_cast<std::size_t>(n)],
                                  z[static_cast<std::size_t>(n)], z[static_cast<std::size_t>(cfg.N + n)]);
      return total;
    };
    const double eig = fd_hessian_max_eigenvalue(phi, point, point);
    report.max_eig_mu = std::max(report.max_eig_mu, eig);
    if (eig > tolerance) throw ConcavityViolation("user surplus", eig);
  }

  // Provider side: Hessian of the utility in its price row, through follower
  // best responses, sampled where every pair is either smoothly interior or
  // deep inside the withheld region (V locally constant 0).
  for (int s = 0; s < samples; ++s) {
    const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.N)));
    const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    std::vector<double> p_row(static_cast<std::size_t>(cfg.M));
    for (int m = 0; m < cfg.M; ++m) {
      const double lo = 1.1 * participation_price(cfg, ch, m, n);
      const double hi = smooth_price_cap(cfg, ch, m, n, 0.9);
      if (lo < hi)
        p_row[static_cast<std::size_t>(m)] = rng.uniform(lo, std::min(hi, 2.5 * lo));
      else
        p_row[static_cast<std::size_t>(m)] = 0.5 * lo / 1.1;  // deep in the withheld region
      if (!std::isfinite(p_row[static_cast<std::size_t>(m)]))
        p_row[static_cast<std::size_t>(m)] = msp.p_min;
    }
    auto psi = [&](std::span<const double> pr) {
      double sum_v = 0.0, paid = 0.0;
      for (int m = 0; m < cfg.M; ++m) {
        std::vector<double> row(static_cast<std::size_t>(cfg.N), 0.0);
        for (int nn = 0; nn < cfg.N; ++nn) row[static_cast<std::size_t>(nn)] = cfg.msps[static_cast<std::size_t>(nn)].p_min;
        row[static_cast<std::size_t>(n)] = pr[static_cast<std::size_t>(m)];
        const auto rs = eq::follower_best_response(cfg, ch, m, row);
        sum_v += rs[static_cast<std::size_t>(n)].V;
        paid += pr[static_cast<std::size_t>(m)] * rs[static_cast<std::size_t>(n)].V;
      }
      return msp.mu * std::log1p(sum_v) - paid;
    };
    const double eig = fd_hessian_max_eigenvalue(psi, p_row, p_row);
    report.max_eig_msp = std::max(report.max_eig_msp, eig);
    if (eig > tolerance) throw ConcavityViolation("provider utility", eig);
  }

  return report;
}

TradingConfig random_unit_instance(Rng& rng) {
  TradingConfig cfg;
  cfg.M = 1;
  cfg.N = 1;
  cfg.seed = rng.next_u64();
  cfg.sinr_db_lo = 0.0;
  cfg.sinr_db_hi = 9.5;
  cfg.channel_mode = ChannelMode::Static;

  MuProfile mu;
  mu.x = rng.uniform(0.5, 1.5);
  mu.theta = rng.uniform(0.2, 0.5);
  mu.c_f = rng.uniform(0.8, 2.0);
  mu.c_B = rng.uniform(0.8, 2.0);
  mu.T_req = 1.0;
  mu.p_tx = 0.1;

  MspProfile msp;
  msp.tau = rng.uniform(1.5, 3.0);
  msp.b = rng.uniform(0.5, 1.5);
  msp.mu = 10.0;
  msp.epsilon = rng.uniform(0.3, 1.0);
  msp.eta = rng.uniform(0.5, 2.0);
  msp.p_min = 1e-6;
  msp.p_max = 1e6;
  cfg.T = msp.tau * rng.uniform(1.0, 6.0);

  const double omega = rng.uniform(0.3, 0.9);
  // Budgets sized from the deadline-bound point so the decoupled closed form
  // is interior for every price this family gets probed at.
  const double a2_min = 1.0;  // log2(1+sinr) at the bottom of the dB range
  const double L = std::log(1.0 / mu.theta);
  const double F_hi = L * std::sqrt(mu.x * mu.c_f / msp.tau) +
                      std::sqrt(msp.b * mu.c_B) / (msp.tau * std::sqrt(a2_min));
  mu.f_max = 50.0 * F_hi * std::sqrt(mu.x * msp.tau / mu.c_f);
  mu.B_max = 50.0 * F_hi * std::sqrt(msp.b / (mu.c_B * a2_min));
  mu.S = 1e-3 * mu.f_max;

  cfg.mus = {mu};
  cfg.msps = {msp};
  cfg.omega = Mat(1, 1, omega);
  cfg.b_override = Mat(1, 1, std::nan(""));
  cfg.fl.class1_prob = {0.5};
  return cfg;
}

}  // namespace iomarket::verify
