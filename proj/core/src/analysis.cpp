#include "kinkfilter/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "kinkfilter/errors.hpp"

namespace kinkfilter {

ParametricFit parametric_fit(std::span<const double> y, std::size_t t0) {
    const std::size_t T = y.size();
    if (T < 3) throw ValidationError("parametric_fit: need at least 3 observations");
    if (!(t0 > 0 && t0 < T - 1)) {
        throw ValidationError("parametric_fit: break index must be strictly interior");
    }
    // Two-column least squares on [1, (t - t0) 1(t > t0)].
    double s11 = static_cast<double>(T), s1h = 0.0, shh = 0.0, s1y = 0.0, shy = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const double h = t > t0 ? static_cast<double>(t - t0) : 0.0;
        s1h += h;
        shh += h * h;
        s1y += y[t];
        shy += h * y[t];
    }
    const double det = s11 * shh - s1h * s1h;
    if (!(std::abs(det) > 0.0)) throw NumericalError("parametric_fit: singular design");
    ParametricFit fit;
    fit.t0 = t0;
    fit.alpha0 = (shh * s1y - s1h * shy) / det;
    fit.alpha1 = (s11 * shy - s1h * s1y) / det;
    fit.fitted.resize(T);
    fit.residuals.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double h = t > t0 ? static_cast<double>(t - t0) : 0.0;
        fit.fitted[t] = fit.alpha0 + fit.alpha1 * h;
        fit.residuals[t] = y[t] - fit.fitted[t];
    }
    return fit;
}

std::vector<double> r0_path(std::span<const double> f, double gamma) {
    if (!(gamma > 0.0)) throw ValidationError("r0_path: gamma must be positive");
    std::vector<double> r0(f.size());
    for (std::size_t t = 0; t < f.size(); ++t) r0[t] = std::exp(f[t]) / gamma;
    return r0;
}

std::size_t SurveillanceReport::segment_of(std::size_t t) const {
    for (std::size_t s = 0; s < segments.size(); ++s) {
        if (t >= segments[s].start && t <= segments[s].end) return s;
    }
    throw InvariantError("surveillance report: index outside every segment");
}

SurveillanceReport contact_growth_rates(std::span<const double> f, const KinkSet& kinks,
                                        double gamma, std::optional<Date> t0_date) {
    const std::size_t T = f.size();
    if (T < 2) throw ValidationError("contact_growth_rates: need at least 2 points");
    SurveillanceReport report;
    report.gamma = gamma;
    report.kink_indices = kinks.indices;
    if (t0_date) {
        for (std::size_t k : kinks.indices) {
            report.kink_dates.push_back(*t0_date + static_cast<std::int64_t>(k));
        }
    }
    report.xi.assign(T, 0.0);
    for (std::size_t t = 1; t < T; ++t) {
        report.xi[t] = (std::exp(f[t] - f[t - 1]) - 1.0) * 100.0;
    }
    report.r0 = r0_path(f, gamma);

    std::size_t start = 0;
    auto close_segment = [&](std::size_t end) {
        SurveillanceReport::Segment seg;
        seg.start = start;
        seg.end = end;
        // The within-segment growth rate is constant for a piecewise-linear
        // trend; report the value at the first day that has one.
        const std::size_t first_xi = std::max<std::size_t>(start, 1);
        seg.xi_percent = first_xi <= end ? report.xi[first_xi] : 0.0;
        report.segments.push_back(seg);
        start = end + 1;
    };
    for (std::size_t k : kinks.indices) {
        if (k >= T) throw ValidationError("contact_growth_rates: kink index out of range");
        close_segment(k);
    }
    close_segment(T - 1);
    return report;
}

UnderreportingReport underreporting_diagnostic(const EpidemicSeries& series, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ValidationError("underreporting_diagnostic: rho must lie in (0, 1]");
    }
    const std::size_t T = series.size();
    if (T < 2) throw ValidationError("underreporting_diagnostic: series too short");
    UnderreportingReport report;
    report.rho = rho;
    report.correction = (rho - 1.0) / rho;

    // Per-day ratio s_{t-1}/c_{t-1}; the lagged values live one slot back in
    // the series, so day t >= 1 contributes the ratio at t-1.
    std::vector<double> ratios;
    ratios.reserve(T - 1);
    std::size_t negligible = 0;
    for (std::size_t t = 1; t < T; ++t) {
        const double s = series.S[t - 1];
        const double c = series.C[t - 1];
        if (!(c > 0.0)) throw NumericalError("underreporting_diagnostic: zero cumulative fraction");
        const double ratio = s / c;
        ratios.push_back(ratio);
        if (std::abs(report.correction) < 0.01 * ratio) ++negligible;
    }
    std::sort(ratios.begin(), ratios.end());
    report.ratio_min = ratios.front();
    report.ratio_max = ratios.back();
    const std::size_t n = ratios.size();
    report.ratio_median =
        n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
    report.negligible_fraction = static_cast<double>(negligible) / static_cast<double>(n);
    report.correction_negligible = negligible == n;
    return report;
}

}  // namespace kinkfilter
