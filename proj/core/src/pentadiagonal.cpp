#include "kinkfilter/pentadiagonal.hpp"

#include <cmath>

#include "kinkfilter/errors.hpp"

namespace kinkfilter {

void PentadiagonalFactor::factor(std::span<const double> d0, std::span<const double> d1,
                                 std::span<const double> d2) {
    const std::size_t n = d0.size();
    l0_.assign(n, 0.0);
    l1_.assign(n > 0 ? n - 1 : 0, 0.0);
    l2_.assign(n > 1 ? n - 2 : 0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double a = d0[i];
        if (i >= 1) a -= l1_[i - 1] * l1_[i - 1];
        if (i >= 2) a -= l2_[i - 2] * l2_[i - 2];
        if (!(a > 0.0)) throw NumericalError("pentadiagonal factorization: nonpositive pivot");
        l0_[i] = std::sqrt(a);
        if (i + 1 < n) {
            double b = d1[i];
            if (i >= 1) b -= l1_[i - 1] * l2_[i - 1];
            l1_[i] = b / l0_[i];
        }
        if (i + 2 < n) {
            l2_[i] = d2[i] / l0_[i];
        }
    }
}

void PentadiagonalFactor::solve_in_place(std::vector<double>& rhs) const {
    const std::size_t n = l0_.size();
    if (rhs.size() != n) throw InvariantError("pentadiagonal solve: size mismatch");
    // Forward: L z = rhs
    for (std::size_t i = 0; i < n; ++i) {
        double v = rhs[i];
        if (i >= 1) v -= l1_[i - 1] * rhs[i - 1];
        if (i >= 2) v -= l2_[i - 2] * rhs[i - 2];
        rhs[i] = v / l0_[i];
    }
    // Backward: L^T x = z
    for (std::size_t ii = n; ii-- > 0;) {
        double v = rhs[ii];
        if (ii + 1 < n) v -= l1_[ii] * rhs[ii + 1];
        if (ii + 2 < n) v -= l2_[ii] * rhs[ii + 2];
        rhs[ii] = v / l0_[ii];
    }
}

std::vector<double> PentadiagonalFactor::solve(std::span<const double> rhs) const {
    std::vector<double> x(rhs.begin(), rhs.end());
    solve_in_place(x);
    return x;
}

PentadiagonalFactor factor_curvature_system(std::span<const double> w,
                                            std::span<const double> fidelity_diag) {
    const std::size_t m = w.size();      // number of interior positions
    const std::size_t n = m + 2;         // series length
    std::vector<double> d0(n, 0.0), d1(n - 1, 0.0), d2(n - 2, 0.0);
    // Interior position t (1..n-2, 0-based series index) carries weight
    // w[t-1]; its row of D touches columns t-1, t, t+1 with (1, -2, 1).
    auto wt = [&](std::int64_t t) -> double {
        return (t >= 1 && t <= static_cast<std::int64_t>(n) - 2) ? w[static_cast<std::size_t>(t - 1)]
                                                                 : 0.0;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<std::int64_t>(i);
        d0[i] = (fidelity_diag.empty() ? 1.0 : fidelity_diag[i]) + wt(t + 1) + 4.0 * wt(t) + wt(t - 1);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto t = static_cast<std::int64_t>(i);
        d1[i] = -2.0 * (wt(t) + wt(t + 1));
    }
    for (std::size_t i = 0; i + 2 < n; ++i) {
        d2[i] = wt(static_cast<std::int64_t>(i) + 1);
    }
    PentadiagonalFactor factor;
    factor.factor(d0, d1, d2);
    return factor;
}

PentadiagonalFactor factor_gram_dd(std::size_t length) {
    if (length < 3) throw ValidationError("gram of D needs length >= 3");
    const std::size_t m = length - 2;
    std::vector<double> d0(m, 6.0), d1(m > 0 ? m - 1 : 0, -4.0), d2(m > 1 ? m - 2 : 0, 1.0);
    PentadiagonalFactor factor;
    factor.factor(d0, d1, d2);
    return factor;
}

}  // namespace kinkfilter
