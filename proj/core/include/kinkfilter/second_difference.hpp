#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kinkfilter/errors.hpp"

namespace kinkfilter {

/// Banded second-order difference operator D of shape (T-2) x T with rows
/// (1, -2, 1). Row r is centred at interior index r+1, so
/// (D f)[r] = f[r] - 2 f[r+1] + f[r+2].
///
/// Index convention used throughout the library: vectors are 0-based and an
/// "interior" index t satisfies 1 <= t <= T-2; the curvature at t is
/// f[t-1] - 2 f[t] + f[t+1] = (D f)[t-1].
class SecondDifference {
public:
    explicit SecondDifference(std::size_t length) : length_(length) {
        if (length < 3) throw ValidationError("second difference needs length >= 3");
    }

    [[nodiscard]] std::size_t rows() const { return length_ - 2; }
    [[nodiscard]] std::size_t cols() const { return length_; }

    /// D f, length T-2.
    [[nodiscard]] std::vector<double> apply(std::span<const double> f) const {
        if (f.size() != length_) throw InvariantError("second difference: length mismatch");
        std::vector<double> out(length_ - 2);
        for (std::size_t r = 0; r < out.size(); ++r) {
            out[r] = f[r] - 2.0 * f[r + 1] + f[r + 2];
        }
        return out;
    }

    /// D^T v, length T.
    [[nodiscard]] std::vector<double> apply_transpose(std::span<const double> v) const {
        if (v.size() != length_ - 2) throw InvariantError("second difference: length mismatch");
        std::vector<double> out(length_, 0.0);
        for (std::size_t r = 0; r < v.size(); ++r) {
            out[r] += v[r];
            out[r + 1] -= 2.0 * v[r];
            out[r + 2] += v[r];
        }
        return out;
    }

private:
    std::size_t length_;
};

/// Curvature at interior index t (0-based), f[t-1] - 2 f[t] + f[t+1].
inline double curvature_at(std::span<const double> f, std::size_t t) {
    return f[t - 1] - 2.0 * f[t] + f[t + 1];
}

}  // namespace kinkfilter
