#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kinkfilter {

/// Interior indices where the second difference of a fitted trend exceeds
/// the effective-zero threshold eta. Indices are 0-based with
/// 1 <= t <= T-2; the curvature at t is f[t-1] - 2 f[t] + f[t+1].
struct KinkSet {
    std::vector<std::size_t> indices;  // sorted
    double eta = 1e-6;

    bool operator==(const KinkSet& other) const { return indices == other.indices; }
};

/// Solution of an absolute-curvature penalized fit
///   min sum (y_t - f_t)^2 + lambda * sum |f_{t-1} - 2 f_t + f_{t+1}|
/// (or its square-root-fidelity variant). kkt_residual is the max-norm of
/// the measured subgradient optimality residual; any certified point of this
/// convex problem is a global minimizer.
struct L1Solution {
    std::vector<double> f;
    double lambda = 0.0;
    double fidelity = 0.0;          // sum (y - f)^2
    double l1_penalty = 0.0;        // sum |Df|
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    // For the square-root variant: the absolute-curvature weight implied by
    // the fixed point, 2 * lambda * ||y - f||_2.
    double effective_weight = 0.0;
};

struct L1Options {
    double tol_opt = 1e-8;     // scaled by max(1, max|y|)
    std::size_t max_iter = 50000;
};

/// Operator-splitting solve; each primal update is one pentadiagonal solve.
/// Declared converged when the subgradient residual is at most
/// tol_opt * max(1, max|y|). When the iteration budget runs out the best
/// iterate is returned with converged = false and its measured residual.
L1Solution l1_solve(std::span<const double> y, double lambda, const L1Options& opts = {});

/// Square-root-fidelity variant
///   min (sum (y_t - f_t)^2)^{1/2} + lambda * sum |Df|,
/// computed by iterating the penalized solve with weight 2*lambda*||y-f||_2
/// until that weight stabilizes to 1e-10 relative. Throws NumericalError if
/// the residual collapses to zero (the objective is non-differentiable
/// there).
L1Solution sqrt_l1_solve(std::span<const double> y, double lambda, const L1Options& opts = {});

/// Independent oracle: change of variables theta = Df turns the problem into
/// a plain LASSO, solved by cyclic coordinate descent to 1e-10, and the
/// trend is reconstructed as f = y - ytilde + Xtilde * theta.
L1Solution l1_via_lasso_oracle(std::span<const double> y, double lambda);

/// Smallest weight for which the fit is the straight line: 2 * max-norm of
/// (D D^T)^{-1} D y.
double l1_lambda_max(std::span<const double> y);

/// Deviation statistic 2.5 * max |u' X| of the reduction design at
/// u = y - f_star. The risk theory for the absolute-curvature filter works
/// on the event that the weight exceeds this value; it is exposed as a
/// diagnostic only.
double lasso_event_statistic(std::span<const double> y, std::span<const double> f_star);

/// All interior t with |f[t-1] - 2 f[t] + f[t+1]| > eta.
KinkSet extract_kinks(std::span<const double> f, double eta = 1e-6);

}  // namespace kinkfilter
