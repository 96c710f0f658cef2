#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kinkfilter {

/// Deterministic randomness helper: every draw is defined on top of
/// mt19937_64, so identical seeds give identical streams on any platform.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

    /// Derives an independent stream, e.g. one per replication.
    static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

    double uniform01();  // open interval (0, 1)
    double uniform(double lo, double hi);
    double normal();  // standard normal via Box-Muller
    double student_t(std::size_t dof);
    std::size_t uniform_index(std::size_t n);  // {0, ..., n-1}

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

enum class NoiseLaw { Gaussian, ScaledT, Heteroskedastic };

NoiseLaw noise_law_from_string(const std::string& name);  // throws ValidationError
std::string to_string(NoiseLaw law);

/// Piecewise-linear truth on the unit interval sampled at T points, plus a
/// mean-zero noise law. Kink positions are fractions of the sample span so
/// the same underlying function can be sampled at several lengths.
struct SyntheticSpec {
    std::size_t T = 100;
    std::vector<double> kink_fractions;  // strictly inside (0, 1), increasing
    std::vector<double> slopes;          // per segment, on the unit-interval scale
    double intercept = 0.0;              // level at the left endpoint
    double slope_bound = 4.0;
    double level_bound = 2.0;
    NoiseLaw noise = NoiseLaw::Gaussian;
    double sigma = 0.3;
    std::size_t t_dof = 4;  // scaled-t degrees of freedom, > 2
    std::uint64_t seed = 0;

    void validate() const;
    /// Fractions mapped to 0-based interior indices.
    [[nodiscard]] std::vector<std::size_t> kink_indices() const;
};

struct SyntheticData {
    std::vector<double> y;
    std::vector<double> f_star;
    std::vector<std::size_t> kinks;  // interior indices of the sampled truth
};

/// Samples the truth and adds noise; bit-identical for identical specs.
SyntheticData generate(const SyntheticSpec& spec);

/// A spec with randomly placed, well-separated kinks and genuinely distinct
/// segment slopes; the workhorse for studies and stress tests.
SyntheticSpec random_piecewise_spec(std::size_t T, std::size_t n_kinks, RandomSource& rng,
                                    double slope_bound = 4.0, double level_bound = 2.0,
                                    double min_slope_change = 1.0, std::size_t min_gap = 3);

/// (1/T) sum (f_hat - f_star)^2.
double empirical_risk(std::span<const double> f_hat, std::span<const double> f_star);

struct ExpBoundReport {
    double lhs = 0.0;  // (1/T) ||exp(f_hat) - exp(f_star)||^2
    double rhs = 0.0;  // exp(2C) * (1/T) ||f_hat - f_star||^2 + 1e-12
    bool holds = false;
};

/// Checks the smoothness transfer bound for trends bounded by C; a violation
/// would indicate an arithmetic bug since the inequality is analytic.
ExpBoundReport exp_risk_bound_check(std::span<const double> f_hat, std::span<const double> f_star,
                                    double level_bound);

struct RiskEstimate {
    std::size_t replications = 0;
    std::vector<double> risks;  // one per replication
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

RiskEstimate summarize_risks(std::vector<double> risks);

struct OverselectionOptions {
    std::size_t replications = 50;
    double sparse_lambda = 1.0;
    double eta = 1e-6;
};

struct OverselectionResult {
    struct Row {
        std::size_t rep = 0;
        std::size_t T = 0;
        std::string method;  // "sparse_hp" or "l1"
        double risk = 0.0;
        std::size_t kink_count = 0;
        bool exact_recovery = false;
    };
    std::vector<Row> rows;
    double mean_count_sparse = 0.0;
    double mean_count_l1 = 0.0;
    double recovery_rate_sparse = 0.0;
    double recovery_rate_l1 = 0.0;
};

/// Compares kink counts of the constrained filter (kappa = true count) with
/// the absolute-penalty filter tuned to the same fidelity, replication by
/// replication.
OverselectionResult overselection_study(const SyntheticSpec& spec,
                                        const OverselectionOptions& opts = {});

struct FeasibilityEventReport {
    std::size_t replications = 0;
    double event_rate = 0.0;        // fraction with statistic < lambda
    double statistic_median = 0.0;  // median of the deviation statistic
};

/// Frequency of the deviation-bound event `2.5 max|u'X| < lambda` over noise
/// replications; a diagnostic for the weight sizes the risk theory needs.
FeasibilityEventReport lasso_feasibility_event(const SyntheticSpec& spec, double lambda,
                                               std::size_t replications = 100);

}  // namespace kinkfilter
