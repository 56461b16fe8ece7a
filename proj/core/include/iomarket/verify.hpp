#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iomarket/equilibrium.hpp"
#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

namespace iomarket::verify {

// Verification oracles: every routine here recomputes its target quantity by
// an independent route (dense grids, finite differences, brute-force loops) so
// the solvers can be checked against something that shares none of their code.

// Max eigenvalue of the central-difference Hessian of `fn` at `x`, computed in
// scaled coordinates (x_i -> x_i + scale_i * h). Scaling keeps curvatures O(1)
// regardless of raw units; eigenvalue signs are invariant under that
// congruence, so concavity verdicts are unaffected.
double fd_hessian_max_eigenvalue(const std::function<double(std::span<const double>)>& fn,
                                 std::span<const double> x, std::span<const double> scale,
                                 double h = 1e-4);

// Dense-grid oracle for one user's decoupled (single-provider) problem:
// scans an n_grid x n_grid lattice over (0, f_cap] x (0, B_cap], skips
// deadline-infeasible points, and returns the best surplus found (never below
// 0, since withholding is always available). Recomputes the objective inline.
struct GridBest {
  double utility = 0.0;
  double f = 0.0;
  double B = 0.0;
};

GridBest grid_oracle_follower(const TradingConfig& cfg, const ChannelState& ch, int m, int n,
                              double price, double f_cap, double B_cap, int n_grid);

// Dense 1-D grid argmax of provider n's utility in the single coordinate
// p_{mn}, everything else held at `prices`. Used to cross-check the
// golden-section leader search.
double grid_price_argmax(const TradingConfig& cfg, const ChannelState& ch, int n, int m,
                         const PriceMatrix& prices, int n_grid);

// Concavity certificate: finite-difference Hessians of user objectives in
// (f_row, B_row) and provider objectives in p_row (through follower best
// responses) at `samples` random interior points each. Throws
// ConcavityViolation when any max eigenvalue exceeds the tolerance.
struct ConcavityReport {
  double max_eig_mu = -1e300;   // worst (largest) eigenvalue seen, user side
  double max_eig_msp = -1e300;  // provider side
  int samples = 0;
};

ConcavityReport verify_concavity(const TradingConfig& cfg, const ChannelState& ch, int samples,
                                 Rng& rng, double tolerance = 1e-6);

// Single-pair instance in O(1) units for scale-sensitive property checks
// (branch continuity, derivative signs). Budgets are left generous so the
// decoupled closed form is the true optimum.
TradingConfig random_unit_instance(Rng& rng);

// Named invariant checks (the `verify-all` command). Each runs one module's
// invariant suite at a configurable size and reports pass/fail.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> run_all_checks(std::uint64_t seed, bool quick = true);

}  // namespace iomarket::verify
