#include "kinkfilter/hp_filter.hpp"

#include <algorithm>
#include <cmath>

#include "kinkfilter/errors.hpp"
#include "kinkfilter/pentadiagonal.hpp"
#include "kinkfilter/second_difference.hpp"

namespace kinkfilter {

namespace {

void check_input(std::span<const double> y, double lambda) {
    if (y.size() < 3) throw ValidationError("hp_solve: need at least 3 observations");
    if (!(lambda >= 0.0)) throw ValidationError("hp_solve: lambda must be nonnegative");
    for (double v : y) {
        if (!std::isfinite(v)) throw ValidationError("hp_solve: non-finite input");
    }
}

std::vector<double> apply_normal_matrix(std::span<const double> f, double lambda,
                                        const SecondDifference& diff) {
    auto df = diff.apply(f);
    for (double& v : df) v *= lambda;
    auto out = diff.apply_transpose(df);
    for (std::size_t i = 0; i < f.size(); ++i) out[i] += f[i];
    return out;
}

}  // namespace

HpSolution hp_solve(std::span<const double> y, double lambda) {
    check_input(y, lambda);
    const std::size_t T = y.size();
    SecondDifference diff(T);

    HpSolution sol;
    sol.lambda = lambda;
    if (lambda == 0.0) {
        sol.f.assign(y.begin(), y.end());
    } else {
        std::vector<double> w(T - 2, lambda);
        PentadiagonalFactor factor = factor_curvature_system(w);
        sol.f = factor.solve(y);
        // One refinement pass keeps the normal-equation residual near machine
        // level at moderate lambda.
        auto r = apply_normal_matrix(sol.f, lambda, diff);
        for (std::size_t i = 0; i < T; ++i) r[i] = y[i] - r[i];
        auto corr = factor.solve(r);
        for (std::size_t i = 0; i < T; ++i) sol.f[i] += corr[i];
    }

    double scale = 1.0;
    for (double v : y) scale = std::max(scale, std::abs(v));
    auto residual = apply_normal_matrix(sol.f, lambda, diff);
    double rmax = 0.0;
    for (std::size_t i = 0; i < T; ++i) rmax = std::max(rmax, std::abs(residual[i] - y[i]));
    sol.normal_residual = rmax;

    sol.fidelity = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double diff_i = y[i] - sol.f[i];
        sol.fidelity += diff_i * diff_i;
    }
    sol.penalty = 0.0;
    for (double v : diff.apply(sol.f)) sol.penalty += v * v;
    return sol;
}

std::vector<double> ols_line(std::span<const double> y) {
    const std::size_t T = y.size();
    if (T < 2) throw ValidationError("ols_line: need at least 2 observations");
    double mean_t = 0.5 * static_cast<double>(T - 1);
    double mean_y = 0.0;
    for (double v : y) mean_y += v;
    mean_y /= static_cast<double>(T);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double dt = static_cast<double>(i) - mean_t;
        sxx += dt * dt;
        sxy += dt * (y[i] - mean_y);
    }
    const double slope = sxy / sxx;
    std::vector<double> line(T);
    for (std::size_t i = 0; i < T; ++i) {
        line[i] = mean_y + slope * (static_cast<double>(i) - mean_t);
    }
    return line;
}

}  // namespace kinkfilter
