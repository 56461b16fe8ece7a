#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

namespace iomarket::schemes {

// Comparison allocation rules. Users split their budgets across providers by
// a fixed weighting signal instead of best-responding to per-user prices;
// providers post one uniform price each.
enum class SchemeKind { XBased, WBased, WXBased, Fixed };

struct BenchmarkScheme {
  SchemeKind kind = SchemeKind::XBased;
  std::uint64_t fixed_seed = 0;  // used by Fixed only: one draw, held for the run
};

const char* scheme_name(SchemeKind kind);

// Unnormalized split weights for user m across the N providers:
//   XBased  : x * tau_n        (per-round data volume)
//   WBased  : omega_mn         (data potential value)
//   WXBased : omega_mn * x * tau_n
//   Fixed   : seeded uniform draw, deterministic per (fixed_seed, m)
std::vector<double> scheme_weights(const BenchmarkScheme& scheme, const TradingConfig& cfg, int m);

struct AllocationRow {
  std::vector<double> f;
  std::vector<double> B;
  std::vector<bool> participating;
};

// User m's allocation under the scheme: proportional split of 0.999-margin
// budgets, then a deadline repair pass (pairs failing the round deadline are
// scaled up to the equality point if budget remains, otherwise withheld).
// The split ignores prices — the weighting signal is the whole rule, which is
// exactly why boosted pairs can carry negative value. Prices are accepted for
// interface parity with the best-response allocators.
AllocationRow allocate(const BenchmarkScheme& scheme, const TradingConfig& cfg,
                       const ChannelState& ch, int m, std::span<const double> uniform_prices);

// Provider n's best uniform price under the scheme: 200-point grid over
// [p_min, p_max] refined by golden section around the best cell (no concavity
// assumed; with a price-free allocation the objective is linear in p).
double uniform_reward_search(const TradingConfig& cfg, const ChannelState& ch, int n,
                             const BenchmarkScheme& scheme);

// Same search but with users best-responding per the trading model (used to
// cross-check the search machinery against the equilibrium coordinate step).
double uniform_reward_search_immersion(const TradingConfig& cfg, const ChannelState& ch, int n,
                                       const PriceMatrix& base);

struct SchemeOutcome {
  std::vector<double> uniform_prices;  // per provider
  Allocation alloc;
  Mat V;                         // realized IoM per pair (0 when withheld)
  std::vector<double> total_iom;  // per provider
  std::vector<double> msp_utilities;
  std::vector<double> mu_utilities;
};

// Full market outcome under one scheme: per-provider uniform price search,
// then every user allocates by the scheme rule.
SchemeOutcome run_scheme_market(const TradingConfig& cfg, const ChannelState& ch,
                                const BenchmarkScheme& scheme);

}  // namespace iomarket::schemes
