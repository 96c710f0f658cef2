#include "kinkfilter/risk_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kinkfilter/errors.hpp"
#include "kinkfilter/sparse_hp.hpp"
#include "kinkfilter/tuning.hpp"

namespace kinkfilter {

std::uint64_t RandomSource::derive_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 step over base + index keeps replication streams apart.
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double RandomSource::uniform01() {
    // 53-bit mantissa draw in (0,1); never returns an exact endpoint.
    const std::uint64_t bits = engine_() >> 11;
    double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    return u;
}

double RandomSource::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double RandomSource::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double RandomSource::student_t(std::size_t dof) {
    if (dof < 3) throw ValidationError("student_t: need dof >= 3");
    const double z = normal();
    double chi2 = 0.0;
    for (std::size_t i = 0; i < dof; ++i) {
        const double g = normal();
        chi2 += g * g;
    }
    return z / std::sqrt(chi2 / static_cast<double>(dof));
}

std::size_t RandomSource::uniform_index(std::size_t n) {
    if (n == 0) throw ValidationError("uniform_index: empty range");
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
}

NoiseLaw noise_law_from_string(const std::string& name) {
    if (name == "gaussian") return NoiseLaw::Gaussian;
    if (name == "scaled_t") return NoiseLaw::ScaledT;
    if (name == "heteroskedastic") return NoiseLaw::Heteroskedastic;
    throw ValidationError("unknown noise law '" + name +
                          "' (expected gaussian, scaled_t or heteroskedastic)");
}

std::string to_string(NoiseLaw law) {
    switch (law) {
        case NoiseLaw::Gaussian: return "gaussian";
        case NoiseLaw::ScaledT: return "scaled_t";
        case NoiseLaw::Heteroskedastic: return "heteroskedastic";
    }
    throw InvariantError("unknown noise law value");
}

void SyntheticSpec::validate() const {
    if (T < 5) throw ValidationError("synthetic spec: T must be at least 5");
    if (slopes.size() != kink_fractions.size() + 1) {
        throw ValidationError("synthetic spec: need one slope per segment (kinks + 1)");
    }
    for (std::size_t j = 0; j < kink_fractions.size(); ++j) {
        const double q = kink_fractions[j];
        if (!(q > 0.0 && q < 1.0)) {
            throw ValidationError("synthetic spec: kink fractions must lie strictly inside (0,1)");
        }
        if (j > 0 && q <= kink_fractions[j - 1]) {
            throw ValidationError("synthetic spec: kink fractions must be increasing");
        }
    }
    for (double s : slopes) {
        if (std::abs(s) > slope_bound) {
            throw ValidationError("synthetic spec: segment slope exceeds the slope bound");
        }
    }
    if (!(sigma >= 0.0)) throw ValidationError("synthetic spec: sigma must be nonnegative");
    auto idx = kink_indices();
    for (std::size_t j = 1; j < idx.size(); ++j) {
        if (idx[j] == idx[j - 1]) {
            throw ValidationError("synthetic spec: kink fractions collide at this T");
        }
    }
}

std::vector<std::size_t> SyntheticSpec::kink_indices() const {
    std::vector<std::size_t> idx;
    idx.reserve(kink_fractions.size());
    for (double q : kink_fractions) {
        auto k = static_cast<std::size_t>(std::lround(q * static_cast<double>(T - 1)));
        k = std::clamp<std::size_t>(k, 1, T - 2);
        idx.push_back(k);
    }
    return idx;
}

SyntheticData generate(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t T = spec.T;
    SyntheticData data;
    data.kinks = spec.kink_indices();

    // Truth: continuous piecewise-linear on [0,1] sampled at T points, with
    // the slope switching after each kink index.
    data.f_star.resize(T);
    data.f_star[0] = spec.intercept;
    const double step = 1.0 / static_cast<double>(T - 1);
    std::size_t seg = 0;
    for (std::size_t t = 1; t < T; ++t) {
        data.f_star[t] = data.f_star[t - 1] + spec.slopes[seg] * step;
        if (seg < data.kinks.size() && t == data.kinks[seg]) ++seg;
    }
    for (double v : data.f_star) {
        if (std::abs(v) > spec.level_bound + 1e-12) {
            throw ValidationError("synthetic spec: truth exceeds the level bound");
        }
    }

    RandomSource rng(spec.seed);
    data.y.resize(T);
    double prev_u = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double u = 0.0;
        switch (spec.noise) {
            case NoiseLaw::Gaussian:
                u = spec.sigma * rng.normal();
                break;
            case NoiseLaw::ScaledT: {
                const double dof = static_cast<double>(spec.t_dof);
                const double unit_scale = std::sqrt((dof - 2.0) / dof);  // unit variance
                u = spec.sigma * unit_scale * rng.student_t(spec.t_dof);
                break;
            }
            case NoiseLaw::Heteroskedastic: {
                // Bounded recursion on the previous magnitude keeps the
                // conditional mean at zero and the scale inside
                // [sigma/2, sigma*sqrt(5)/2].
                const double sigma2 = spec.sigma * spec.sigma;
                const double ratio = sigma2 > 0.0 ? std::min(prev_u * prev_u / sigma2, 4.0) : 0.0;
                const double var = sigma2 * (0.25 + 0.25 * ratio);
                u = std::sqrt(var) * rng.normal();
                break;
            }
        }
        prev_u = u;
        data.y[t] = data.f_star[t] + u;
    }
    return data;
}

SyntheticSpec random_piecewise_spec(std::size_t T, std::size_t n_kinks, RandomSource& rng,
                                    double slope_bound, double level_bound,
                                    double min_slope_change, std::size_t min_gap) {
    if (T < 3 * (n_kinks + 1)) throw ValidationError("random spec: T too small for the kink count");
    SyntheticSpec spec;
    spec.T = T;
    spec.slope_bound = slope_bound;
    spec.level_bound = level_bound;

    // Distinct interior kink indices separated by at least min_gap, also kept
    // off the boundary.
    std::vector<std::size_t> kinks;
    std::size_t guard = 0;
    while (kinks.size() < n_kinks) {
        if (++guard > 10000) throw NumericalError("random spec: could not place separated kinks");
        const std::size_t lo = min_gap;
        const std::size_t hi = T - 1 - min_gap;
        const std::size_t k = lo + rng.uniform_index(hi - lo + 1);
        bool ok = true;
        for (std::size_t existing : kinks) {
            if (existing >= k ? existing - k < min_gap : k - existing < min_gap) ok = false;
        }
        if (ok) kinks.push_back(k);
    }
    std::sort(kinks.begin(), kinks.end());
    for (std::size_t k : kinks) {
        spec.kink_fractions.push_back(static_cast<double>(k) / static_cast<double>(T - 1));
    }

    // Slopes with genuinely different values across each kink.
    spec.slopes.resize(n_kinks + 1);
    spec.slopes[0] = rng.uniform(-slope_bound, slope_bound);
    for (std::size_t j = 1; j <= n_kinks; ++j) {
        guard = 0;
        while (true) {
            if (++guard > 10000) throw NumericalError("random spec: could not draw distinct slopes");
            const double s = rng.uniform(-slope_bound, slope_bound);
            if (std::abs(s - spec.slopes[j - 1]) >= min_slope_change) {
                spec.slopes[j] = s;
                break;
            }
        }
    }

    // Center the truth so the level bound holds without rescaling slopes
    // (total variation over [0,1] is at most the slope bound).
    spec.intercept = 0.0;
    SyntheticSpec probe = spec;
    probe.sigma = 0.0;
    probe.noise = NoiseLaw::Gaussian;
    probe.level_bound = std::numeric_limits<double>::infinity();  // centred below
    SyntheticData d = generate(probe);
    const auto [mn, mx] = std::minmax_element(d.f_star.begin(), d.f_star.end());
    spec.intercept = -0.5 * (*mn + *mx);
    return spec;
}

double empirical_risk(std::span<const double> f_hat, std::span<const double> f_star) {
    if (f_hat.size() != f_star.size()) throw ValidationError("empirical_risk: length mismatch");
    if (f_hat.empty()) throw ValidationError("empirical_risk: empty input");
    double sum = 0.0;
    for (std::size_t t = 0; t < f_hat.size(); ++t) {
        const double d = f_hat[t] - f_star[t];
        sum += d * d;
    }
    return sum / static_cast<double>(f_hat.size());
}

ExpBoundReport exp_risk_bound_check(std::span<const double> f_hat, std::span<const double> f_star,
                                    double level_bound) {
    if (f_hat.size() != f_star.size()) throw ValidationError("exp bound: length mismatch");
    for (std::size_t t = 0; t < f_hat.size(); ++t) {
        if (std::abs(f_hat[t]) > level_bound || std::abs(f_star[t]) > level_bound) {
            throw ValidationError("exp bound: trend exceeds the stated level bound");
        }
    }
    ExpBoundReport report;
    double lhs = 0.0;
    for (std::size_t t = 0; t < f_hat.size(); ++t) {
        const double d = std::exp(f_hat[t]) - std::exp(f_star[t]);
        lhs += d * d;
    }
    report.lhs = lhs / static_cast<double>(f_hat.size());
    report.rhs = std::exp(2.0 * level_bound) * empirical_risk(f_hat, f_star) + 1e-12;
    report.holds = report.lhs <= report.rhs;
    return report;
}

RiskEstimate summarize_risks(std::vector<double> risks) {
    if (risks.empty()) throw ValidationError("summarize_risks: no replications");
    RiskEstimate est;
    est.replications = risks.size();
    est.risks = risks;
    std::sort(risks.begin(), risks.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(risks.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, risks.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return risks[lo] * (1.0 - frac) + risks[hi] * frac;
    };
    est.q1 = quantile(0.25);
    est.median = quantile(0.5);
    est.q3 = quantile(0.75);
    return est;
}

FeasibilityEventReport lasso_feasibility_event(const SyntheticSpec& spec, double lambda,
                                               std::size_t replications) {
    spec.validate();
    if (replications == 0) throw ValidationError("feasibility event: need replications");
    FeasibilityEventReport report;
    report.replications = replications;
    std::vector<double> statistics;
    statistics.reserve(replications);
    std::size_t events = 0;
    for (std::size_t rep = 0; rep < replications; ++rep) {
        SyntheticSpec rep_spec = spec;
        rep_spec.seed = RandomSource::derive_seed(spec.seed, rep);
        SyntheticData data = generate(rep_spec);
        const double stat = lasso_event_statistic(data.y, data.f_star);
        statistics.push_back(stat);
        if (stat < lambda) ++events;
    }
    std::sort(statistics.begin(), statistics.end());
    report.statistic_median = statistics[statistics.size() / 2];
    report.event_rate = static_cast<double>(events) / static_cast<double>(replications);
    return report;
}

OverselectionResult overselection_study(const SyntheticSpec& spec,
                                        const OverselectionOptions& opts) {
    spec.validate();
    if (opts.replications == 0) throw ValidationError("overselection study: need replications");
    OverselectionResult result;
    const std::vector<std::size_t> truth = spec.kink_indices();
    std::size_t recovered_sparse = 0, recovered_l1 = 0;
    double count_sparse = 0.0, count_l1 = 0.0;

    for (std::size_t rep = 0; rep < opts.replications; ++rep) {
        SyntheticSpec rep_spec = spec;
        rep_spec.seed = RandomSource::derive_seed(spec.seed, rep);
        SyntheticData data = generate(rep_spec);

        SparseHpProblem problem =
            SparseHpProblem::from_data(data.y, truth.size(), opts.sparse_lambda);
        SparseHpSolution sparse = solve_bnb(problem);
        KinkSet sparse_kinks = extract_kinks(sparse.f, opts.eta);

        MatchedFit l1 = match_fidelity(data.y, sparse.fidelity, ComparatorFilter::L1,
                                       default_bracket(data.y, ComparatorFilter::L1), opts.eta);

        auto add_row = [&](const std::string& method, const std::vector<double>& f,
                           const KinkSet& kinks) {
            OverselectionResult::Row row;
            row.rep = rep;
            row.T = spec.T;
            row.method = method;
            row.risk = empirical_risk(f, data.f_star);
            row.kink_count = kinks.indices.size();
            row.exact_recovery = kinks.indices == truth;
            result.rows.push_back(row);
            return row;
        };
        auto srow = add_row("sparse_hp", sparse.f, sparse_kinks);
        auto lrow = add_row("l1", l1.f, l1.kinks);
        count_sparse += static_cast<double>(srow.kink_count);
        count_l1 += static_cast<double>(lrow.kink_count);
        recovered_sparse += srow.exact_recovery ? 1 : 0;
        recovered_l1 += lrow.exact_recovery ? 1 : 0;
    }
    const auto n = static_cast<double>(opts.replications);
    result.mean_count_sparse = count_sparse / n;
    result.mean_count_l1 = count_l1 / n;
    result.recovery_rate_sparse = static_cast<double>(recovered_sparse) / n;
    result.recovery_rate_l1 = static_cast<double>(recovered_l1) / n;
    return result;
}

}  // namespace kinkfilter
