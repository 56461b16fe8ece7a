#pragma once

#include <span>
#include <vector>

#include "iomarket/iom.hpp"
#include "iomarket/types.hpp"

namespace iomarket::eq {

// Two-level market: providers (leaders) post per-user prices, users (followers)
// answer with compute/bandwidth splits. The follower problem has a closed form
// per pair as long as the per-user budget constraints stay slack; when they
// bind, the coupled concave program still solves in closed form because the
// marginal cost rates are provider-independent within a user (see
// coupled_follower_response).

enum class Branch {
  Interior,       // deadline slack, first-order conditions alone pin (f, B)
  DeadlineBound,  // round deadline tight, multiplier delta = F^2 - p*I > 0
  Withheld,       // pair does not trade: f = B = 0
};

struct FollowerResponse {
  double f = 0.0;
  double B = 0.0;
  Branch branch = Branch::Withheld;
  double delta = 0.0;    // deadline multiplier (0 off the deadline branch)
  double F = 0.0;        // branch threshold scale: interior iff p >= F^2 / I
  double V = 0.0;        // IoM value at (f, B); 0 when withheld
  double net = 0.0;      // p*V - cost at (f, B); the user's per-pair surplus
  bool coupled = false;  // true when the budget-coupled fallback produced it
};

// Threshold scale F for pair (m, n):
//   F = ln(1/theta) * sqrt(x * c_f / tau) + sqrt(b * c_B) / (tau * sqrt(log2(1+sinr)))
double pair_threshold_F(const TradingConfig& cfg, const ChannelState& ch, int m, int n);

// Raw per-pair optimum of the decoupled follower problem (no participation
// filter, no budget coupling):
//   p >= F^2/I : f = sqrt(p I x tau / c_f),  B = sqrt(p I b / (c_B log2(1+sinr)))
//   0 < p < F^2/I : f = F sqrt(x tau / c_f), B = F sqrt(b / (c_B log2(1+sinr)))
//   p <= 0 (or I <= 0): withheld
FollowerResponse follower_branch_point(const TradingConfig& cfg, const ChannelState& ch, int m,
                                       int n, double price);

// Full follower best response for user m against a posted price row (one price
// per provider): branch points, then the participation filter (V <= 0 or
// p*V - cost <= 0 means withhold), then the aggregate budget check; if the
// decoupled solution overshoots a budget, coupled_follower_response takes over
// and the result is tagged `coupled`.
std::vector<FollowerResponse> follower_best_response(const TradingConfig& cfg,
                                                     const ChannelState& ch, int m,
                                                     std::span<const double> prices);

// Exact budget-coupled follower solve over
//   {sum f <= 0.999*(f_max - S/T_req), sum B <= 0.999*B_max, f,B >= 0}.
// The surplus is separable in the f and B blocks and each block's marginal
// cost rate (c_f*ln(1/theta), c_B) is the same for every provider, so the KKT
// multiplier of a binding budget rescales all pairs by one common factor: the
// optimum is the decoupled base scaled radially onto the budget, per block.
// Pairs whose surplus is nonpositive at the scaled point are withheld and the
// remainder re-solved; a drop only frees budget, so the loop terminates.
std::vector<FollowerResponse> coupled_follower_response(const TradingConfig& cfg,
                                                        const ChannelState& ch, int m,
                                                        std::span<const double> prices);

// Iterative cross-check for coupled_follower_response: projected gradient
// ascent on the user's utility over the same budget region, run in
// budget-normalized coordinates with Armijo backtracking. Slower and only
// accurate to the projected-gradient tolerance; kept as an independent
// verification path, not used by the solvers.
std::vector<FollowerResponse> projected_gradient_follower(const TradingConfig& cfg,
                                                          const ChannelState& ch, int m,
                                                          std::span<const double> prices,
                                                          double step = 0.25, int max_iters = 20000);

// Resource spend for one pair: C = c_f * ln(1/theta) * f + c_B * B.
double mu_cost(const MuProfile& mu, double f, double B);

// User m's total utility at an explicit allocation row; throws
// InfeasibleAllocation("C1"/"C2"/"C3") instead of clamping infeasible input.
double mu_utility(const TradingConfig& cfg, const ChannelState& ch, int m,
                  std::span<const double> prices, std::span<const double> f_row,
                  std::span<const double> B_row);

// Provider utility: mu * ln(1 + sum V) - sum p*V.
double msp_utility(const MspProfile& msp, std::span<const double> V_col,
                   std::span<const double> p_col);

// Follower responses for the whole market at a posted price matrix.
struct MarketResponse {
  Allocation alloc;
  Mat V;  // M x N, zero for withheld pairs
  std::vector<std::vector<FollowerResponse>> detail;  // [m][n]
  std::vector<double> mu_utilities;                   // per user
};

MarketResponse respond(const TradingConfig& cfg, const ChannelState& ch, const PriceMatrix& prices);

// Provider n's best reply: cyclic per-user coordinate maximization of its
// utility over [p_min, p_max], each coordinate by bracketing scan plus
// golden-section refinement with bracket tolerance tol.
std::vector<double> msp_best_response(const TradingConfig& cfg, const ChannelState& ch, int n,
                                      const PriceMatrix& prices, double tol = 1e-8);

struct EquilibriumResult {
  PriceMatrix prices;
  Allocation alloc;
  Mat V;
  std::vector<double> msp_utilities;
  std::vector<double> mu_utilities;
  int sweeps = 0;
  bool converged = false;
};

// Gauss-Seidel best-response iteration over providers in index order with warm
// starts, damped over a portfolio of damping factors (see solve_ne's source).
// Converged when no best response is further than tol from the posted price,
// measured relative to the provider's price scale max(|p_min|, p_max) so the
// stopping rule is currency-invariant; damping never loosens the certificate.
// A non-converged result carries the lowest-residual iterate seen with
// converged = false.
EquilibriumResult solve_ne(const TradingConfig& cfg, const ChannelState& ch,
                           const PriceMatrix& initial, double tol = 1e-6, int max_sweeps = 4800);

// Midpoint prices (p_min+p_max)/2, the standard starting point.
PriceMatrix midpoint_prices(const TradingConfig& cfg);

// Computes (alloc, V, utilities) for a fixed allocation choice, used by
// benchmark schemes that bypass the best response.
double pair_surplus(const TradingConfig& cfg, const ChannelState& ch, int m, int n, double price,
                    double f, double B);

}  // namespace iomarket::eq
