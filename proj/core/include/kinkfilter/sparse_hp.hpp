#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "kinkfilter/l1_filter.hpp"  // KinkSet

namespace kinkfilter {

inline constexpr std::size_t kNoSkip = std::numeric_limits<std::size_t>::max();

/// Curvature-count constrained quadratic smoothing problem:
///   min  sum (y_t - f_t)^2 + lambda * sum (Df)_t^2
///   s.t. #{t : (Df)_t != 0} <= kappa,
/// with box bounds f in [f_lo, f_hi] and |(Df)_t| <= big_m taken from the
/// data as in the big-M integer-programming formulation.
struct SparseHpProblem {
    std::vector<double> y;
    std::size_t kappa = 0;
    double lambda = 0.0;
    double f_lo = 0.0;
    double f_hi = 0.0;
    double big_m = 0.0;

    /// Fills f_lo = min y, f_hi = max y and big_m = max interior |curvature
    /// of y|.
    static SparseHpProblem from_data(std::span<const double> y, std::size_t kappa, double lambda);

    void validate() const;
};

/// Piecewise-linear trend for a fixed kink set, parameterized as
///   f_t = intercept + slope * t + sum_k hinge_coeffs[k] * max(t - k, 0)
/// with t the 0-based day offset. The hinge basis diagonalizes the second
/// difference on its support: (Df)_k = hinge_coeffs[k] on the kink set and 0
/// elsewhere.
struct KinkBasisModel {
    std::vector<std::size_t> kinks;  // sorted interior indices
    double intercept = 0.0;
    double slope = 0.0;
    std::vector<double> hinge_coeffs;
    std::vector<double> f;       // fitted values over all t, including a skipped row
    double fidelity = 0.0;       // over the rows entering the fit
    double ridge_penalty = 0.0;  // lambda * sum hinge_coeffs^2
    double objective = 0.0;      // fidelity + ridge_penalty
};

/// Exact minimizer over piecewise-linear trends with kinks only in `kinks`,
/// ridge weight lambda on the hinge coefficients only. Pass skip_row to drop
/// one observation from the fidelity term (the fitted model still evaluates
/// there). Throws NumericalError on rank deficiency instead of regularizing.
KinkBasisModel restricted_qp(std::span<const double> y, std::span<const std::size_t> kinks,
                             double lambda, std::size_t skip_row = kNoSkip);

struct SparseHpOptions {
    std::optional<std::vector<std::size_t>> warm_start;  // incumbent seed for solve_bnb
    std::size_t node_budget = 10'000'000;
    std::size_t enumeration_cap = 5'000'000;  // kink sets, solve_exhaustive
    std::size_t skip_row = kNoSkip;           // leave-one-out fidelity
    // solve_bnb closes a node by direct enumeration once the number of its
    // completions falls under this cap; the incremental-Cholesky evaluator
    // makes that far cheaper than branching further.
    std::size_t subtree_enumeration_cap = 4'000'000;
};

struct SparseHpSolution {
    std::vector<double> f;
    KinkSet kinks;
    std::vector<std::uint8_t> z;  // indicator over interior positions 1..T-2
    double objective = 0.0;
    double fidelity = 0.0;
    double penalty = 0.0;  // lambda * sum of squared kink curvatures
    std::size_t nodes_explored = 0;
    double bound_gap = 0.0;         // 0 when the search certified optimality
    bool bounds_violation = false;  // box/big-M check failed on the optimum
    bool bounds_refit_applied = false;
};

/// Global minimizer by enumeration of every kink set of size <= kappa; ties
/// broken by fewer kinks, then lexicographically smallest set. Throws
/// BudgetError when the enumeration cap is exceeded.
SparseHpSolution solve_exhaustive(const SparseHpProblem& problem, const SparseHpOptions& opts = {});

/// Certified global minimizer by best-first branch-and-bound over kink
/// placements. If the node budget runs out the incumbent is returned with a
/// nonzero bound_gap instead of failing.
SparseHpSolution solve_bnb(const SparseHpProblem& problem, const SparseHpOptions& opts = {});

}  // namespace kinkfilter
