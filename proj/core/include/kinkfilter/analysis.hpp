#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kinkfilter/dates.hpp"
#include "kinkfilter/l1_filter.hpp"
#include "kinkfilter/series.hpp"

namespace kinkfilter {

/// Recovery-plus-death rate per day: 18 days of average infectious period.
inline constexpr double kDefaultGamma = 1.0 / 18.0;

/// Single-break regression y_t = alpha0 + alpha1 * (t - t0) * 1(t > t0) + e_t
/// fit by least squares for a known break index t0.
struct ParametricFit {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    std::size_t t0 = 0;            // 0-based break index, 0 < t0 < T-1
    std::vector<double> fitted;    // alpha0 + alpha1 * hinge
    std::vector<double> residuals;
};

ParametricFit parametric_fit(std::span<const double> y, std::size_t t0);

/// Reproduction-number path exp(f_t) / gamma.
///
/// This transform treats the trend as the log of the contact rate; that read
/// is exact only under homoskedastic errors, so the path is descriptive (it
/// sizes the kinks) rather than a calibrated estimate.
std::vector<double> r0_path(std::span<const double> f, double gamma = kDefaultGamma);

/// Percent day-over-day growth of the contact rate, segmented at the kinks.
/// A kink at index k closes the previous segment at k (the growth rate uses
/// the backward difference, so day k still belongs to the earlier slope) and
/// the next segment opens at k+1.
struct SurveillanceReport {
    struct Segment {
        std::size_t start = 0;  // inclusive indices into the trend vector
        std::size_t end = 0;
        double xi_percent = 0.0;
    };
    std::vector<Segment> segments;
    std::vector<double> xi;  // xi[t] for t >= 1; xi[0] is undefined and set to 0
    std::vector<double> r0;
    double gamma = kDefaultGamma;
    std::vector<std::size_t> kink_indices;
    std::vector<Date> kink_dates;  // filled when a start date is supplied

    /// Segment id for day t (0-based), matching the emitted tables.
    [[nodiscard]] std::size_t segment_of(std::size_t t) const;
};

SurveillanceReport contact_growth_rates(std::span<const double> f, const KinkSet& kinks,
                                        double gamma = kDefaultGamma,
                                        std::optional<Date> t0_date = std::nullopt);

/// Sensitivity of the transform to a constant reporting fraction rho: the
/// per-day ratio s/c against the correction term (rho-1)/rho.
struct UnderreportingReport {
    double rho = 1.0;
    double correction = 0.0;  // (rho - 1) / rho
    double ratio_min = 0.0;
    double ratio_median = 0.0;
    double ratio_max = 0.0;
    double negligible_fraction = 0.0;  // days where |correction| < 1% of s/c
    bool correction_negligible = false;
};

UnderreportingReport underreporting_diagnostic(const EpidemicSeries& series, double rho);

}  // namespace kinkfilter
