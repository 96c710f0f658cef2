#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kinkfilter {

/// Cholesky factorization of a symmetric positive-definite matrix with
/// bandwidth 2 (pentadiagonal), stored by diagonals. Factor once, solve many
/// times; both steps are O(n).
class PentadiagonalFactor {
public:
    PentadiagonalFactor() = default;

    /// d0: main diagonal (n), d1: first superdiagonal (n-1), d2: second
    /// superdiagonal (n-2). Throws NumericalError if a pivot is not positive.
    void factor(std::span<const double> d0, std::span<const double> d1,
                std::span<const double> d2);

    [[nodiscard]] std::vector<double> solve(std::span<const double> rhs) const;
    void solve_in_place(std::vector<double>& rhs) const;

    [[nodiscard]] std::size_t size() const { return l0_.size(); }

private:
    std::vector<double> l0_, l1_, l2_;  // L diagonals, f = L L^T
};

/// Builds and factors I_w + D^T W D where W = diag(w) weights the interior
/// curvature positions (w[t-1] multiplies curvature at interior index t) and
/// I_w is the identity with diagonal entries fidelity_diag (pass empty for
/// ones). Used by the HP solve, the ADMM inner step and branch-and-bound
/// node relaxations.
PentadiagonalFactor factor_curvature_system(std::span<const double> w,
                                            std::span<const double> fidelity_diag = {});

/// Builds and factors D D^T (size (T-2) x (T-2), SPD, bands 6/-4/1) for the
/// dual system used by optimality certificates.
PentadiagonalFactor factor_gram_dd(std::size_t length);

}  // namespace kinkfilter
