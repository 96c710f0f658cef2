#pragma once

#include <span>
#include <vector>

namespace kinkfilter {

/// Result of the quadratic smoothing solve. The fitted trend is the unique
/// minimizer of  sum (y_t - f_t)^2 + lambda * sum (f_{t-1} - 2 f_t + f_{t+1})^2.
struct HpSolution {
    std::vector<double> f;
    double lambda = 0.0;
    double fidelity = 0.0;        // sum (y - f)^2
    double penalty = 0.0;         // sum (Df)^2
    double normal_residual = 0.0; // max-norm of (I + lambda D'D) f - y
};

/// Direct solve of the normal equations via pentadiagonal Cholesky, O(T) in
/// time and memory, followed by one step of iterative refinement. Throws
/// ValidationError for non-finite input or lambda < 0, and for T < 3.
HpSolution hp_solve(std::span<const double> y, double lambda);

/// Closed-form least-squares straight line through y; the lambda -> infinity
/// limit of hp_solve and the kappa = 0 case of the constrained filters.
std::vector<double> ols_line(std::span<const double> y);

}  // namespace kinkfilter
