#include "iomarket/schemes.hpp"

#include <cmath>
#include <limits>

#include "iomarket/equilibrium.hpp"
#include "iomarket/golden.hpp"
#include "iomarket/iom.hpp"

namespace iomarket::schemes {

namespace {
constexpr double kBudgetMargin = 0.999;
}

const char* scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::XBased: return "x_based";
    case SchemeKind::WBased: return "w_based";
    case SchemeKind::WXBased: return "w_x_based";
    case SchemeKind::Fixed: return "fixed";
  }
  return "unknown";
}

std::vector<double> scheme_weights(const BenchmarkScheme& scheme, const TradingConfig& cfg, int m) {
  std::vector<double> w(static_cast<std::size_t>(cfg.N), 0.0);
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  switch (scheme.kind) {
    case SchemeKind::XBased:
      for (int n = 0; n < cfg.N; ++n) w[static_cast<std::size_t>(n)] = mu.x * cfg.msps[static_cast<std::size_t>(n)].tau;
      break;
    case SchemeKind::WBased:
      for (int n = 0; n < cfg.N; ++n) w[static_cast<std::size_t>(n)] = cfg.omega.at(m, n);
      break;
    case SchemeKind::WXBased:
      for (int n = 0; n < cfg.N; ++n)
        w[static_cast<std::size_t>(n)] = cfg.omega.at(m, n) * mu.x * cfg.msps[static_cast<std::size_t>(n)].tau;
      break;
    case SchemeKind::Fixed: {
      // One draw per (seed, user), held for the whole run.
      Rng draw(scheme.fixed_seed, static_cast<std::uint64_t>(m) + 1);
      for (int n = 0; n < cfg.N; ++n) w[static_cast<std::size_t>(n)] = draw.uniform(0.05, 1.0);
      break;
    }
  }
  return w;
}

AllocationRow allocate(const BenchmarkScheme& scheme, const TradingConfig& cfg,
                       const ChannelState& ch, int m, std::span<const double> uniform_prices) {
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const int N = cfg.N;
  AllocationRow row;
  row.f.assign(static_cast<std::size_t>(N), 0.0);
  row.B.assign(static_cast<std::size_t>(N), 0.0);
  row.participating.assign(static_cast<std::size_t>(N), false);

  const double f_budget = kBudgetMargin * (mu.f_max - mu.S / mu.T_req);
  const double B_budget = kBudgetMargin * mu.B_max;
  if (f_budget <= 0.0 || B_budget <= 0.0) return row;

  std::vector<double> w = scheme_weights(scheme, cfg, m);
  double total_w = 0.0;
  for (double wn : w) total_w += wn;
  if (total_w <= 0.0) return row;

  double sum_f = 0.0, sum_B = 0.0;
  for (int n = 0; n < N; ++n) {
    if (w[static_cast<std::size_t>(n)] <= 0.0) continue;
    row.f[static_cast<std::size_t>(n)] = w[static_cast<std::size_t>(n)] / total_w * f_budget;
    row.B[static_cast<std::size_t>(n)] = w[static_cast<std::size_t>(n)] / total_w * B_budget;
    row.participating[static_cast<std::size_t>(n)] = true;
    sum_f += row.f[static_cast<std::size_t>(n)];
    sum_B += row.B[static_cast<std::size_t>(n)];
  }

  // Deadline repair: a pair slower than the round length is scaled radially
  // to the equality point when the budgets still allow it, otherwise dropped.
  for (int n = 0; n < N; ++n) {
    if (!row.participating[static_cast<std::size_t>(n)]) continue;
    const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    const double f = row.f[static_cast<std::size_t>(n)];
    const double B = row.B[static_cast<std::size_t>(n)];
    const double t = iom::local_training_time(mu.theta, mu.x, msp.tau, f) +
                     iom::upload_time(cfg.payload(m, n), B, ch.sinr.at(m, n));
    if (t <= msp.tau) continue;
    const double s = t / msp.tau;  // time scales as 1/s along the ray
    const bool fits = sum_f - f + s * f <= f_budget && sum_B - B + s * B <= B_budget;
    if (fits) {
      sum_f += (s - 1.0) * f;
      sum_B += (s - 1.0) * B;
      row.f[static_cast<std::size_t>(n)] = s * f;
      row.B[static_cast<std::size_t>(n)] = s * B;
    } else {
      sum_f -= f;
      sum_B -= B;
      row.f[static_cast<std::size_t>(n)] = 0.0;
      row.B[static_cast<std::size_t>(n)] = 0.0;
      row.participating[static_cast<std::size_t>(n)] = false;
    }
  }
  (void)uniform_prices;  // the schemes split on their signal alone
  return row;
}

namespace {

// log(1 + s) leaves the domain when deadline-boosted pairs drag the column
// sum to -1 or below; the provider utility is then effectively -inf.
double safe_provider_utility(double mu_coef, double sum_v, double paid) {
  if (1.0 + sum_v <= 0.0) return -std::numeric_limits<double>::infinity();
  return mu_coef * std::log1p(sum_v) - paid;
}

// Provider n's utility when every user allocates by the scheme at uniform
// price p. The scheme allocation ignores prices, so sum_v is constant and
// the objective is linear in p; the grid+golden search still finds the end.
double scheme_provider_utility(const TradingConfig& cfg, const ChannelState& ch, int n,
                               const BenchmarkScheme& scheme, double p) {
  std::vector<double> prices(static_cast<std::size_t>(cfg.N), p);
  double sum_v = 0.0;
  for (int m = 0; m < cfg.M; ++m) {
    const AllocationRow row = allocate(scheme, cfg, ch, m, prices);
    if (!row.participating[static_cast<std::size_t>(n)]) continue;
    sum_v += iom::pair_breakdown(cfg, ch, m, n, row.f[static_cast<std::size_t>(n)],
                                 row.B[static_cast<std::size_t>(n)])
                 .V;
  }
  return safe_provider_utility(cfg.msps[static_cast<std::size_t>(n)].mu, sum_v, p * sum_v);
}

}  // namespace

double uniform_reward_search(const TradingConfig& cfg, const ChannelState& ch, int n,
                             const BenchmarkScheme& scheme) {
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  auto psi = [&](double p) { return scheme_provider_utility(cfg, ch, n, scheme, p); };
  return scan_then_golden_max(psi, msp.p_min, msp.p_max, 200, 1e-9 * (msp.p_max - msp.p_min));
}

double uniform_reward_search_immersion(const TradingConfig& cfg, const ChannelState& ch, int n,
                                       const PriceMatrix& base) {
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  auto psi = [&](double p) {
    double sum_v = 0.0, paid = 0.0;
    for (int m = 0; m < cfg.M; ++m) {
      std::vector<double> row = base.mu_prices(m);
      row[static_cast<std::size_t>(n)] = p;
      const auto rs = eq::follower_best_response(cfg, ch, m, row);
      sum_v += rs[static_cast<std::size_t>(n)].V;
      paid += p * rs[static_cast<std::size_t>(n)].V;
    }
    return msp.mu * std::log1p(sum_v) - paid;
  };
  return scan_then_golden_max(psi, msp.p_min, msp.p_max, 200, 1e-9 * (msp.p_max - msp.p_min));
}

SchemeOutcome run_scheme_market(const TradingConfig& cfg, const ChannelState& ch,
                                const BenchmarkScheme& scheme) {
  SchemeOutcome out;
  out.uniform_prices.resize(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n)
    out.uniform_prices[static_cast<std::size_t>(n)] = uniform_reward_search(cfg, ch, n, scheme);

  out.alloc = Allocation(cfg.M, cfg.N);
  out.V = Mat(cfg.M, cfg.N);
  out.total_iom.assign(static_cast<std::size_t>(cfg.N), 0.0);
  out.msp_utilities.assign(static_cast<std::size_t>(cfg.N), 0.0);
  out.mu_utilities.assign(static_cast<std::size_t>(cfg.M), 0.0);

  std::vector<double> paid(static_cast<std::size_t>(cfg.N), 0.0);
  for (int m = 0; m < cfg.M; ++m) {
    const AllocationRow row = allocate(scheme, cfg, ch, m, out.uniform_prices);
    for (int n = 0; n < cfg.N; ++n) {
      if (!row.participating[static_cast<std::size_t>(n)]) continue;
      const double f = row.f[static_cast<std::size_t>(n)];
      const double B = row.B[static_cast<std::size_t>(n)];
      out.alloc.f.at(m, n) = f;
      out.alloc.B.at(m, n) = B;
      out.alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] = true;
      const double v = iom::pair_breakdown(cfg, ch, m, n, f, B).V;
      out.V.at(m, n) = v;
      out.total_iom[static_cast<std::size_t>(n)] += v;
      const double p = out.uniform_prices[static_cast<std::size_t>(n)];
      paid[static_cast<std::size_t>(n)] += p * v;
      out.mu_utilities[static_cast<std::size_t>(m)] +=
          p * v - eq::mu_cost(cfg.mus[static_cast<std::size_t>(m)], f, B);
    }
  }
  for (int n = 0; n < cfg.N; ++n)
    out.msp_utilities[static_cast<std::size_t>(n)] =
        safe_provider_utility(cfg.msps[static_cast<std::size_t>(n)].mu,
                              out.total_iom[static_cast<std::size_t>(n)], paid[static_cast<std::size_t>(n)]);
  return out;
}

}  // namespace iomarket::schemes
