#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kinkfilter/hp_filter.hpp"
#include "kinkfilter/l1_filter.hpp"
#include "kinkfilter/sparse_hp.hpp"

namespace kinkfilter {

/// Candidate (kappa, lambda) pairs for the constrained filter.
struct TuningGrid {
    std::vector<std::size_t> kappas = {2, 3, 4};
    std::vector<double> lambdas = {1, 2, 4, 8, 16, 32};

    void validate() const;
};

struct CellDiagnostics {
    std::size_t total_nodes = 0;
    double max_bound_gap = 0.0;
    std::size_t failed_solves = 0;
    bool valid = true;
};

struct TuningResult {
    struct Cell {
        std::size_t kappa = 0;
        double lambda = 0.0;
        double score = 0.0;  // sum of squared held-out prediction errors
        CellDiagnostics diagnostics;
    };
    std::vector<Cell> cells;  // grid order: kappas outer, lambdas inner
    std::size_t selected_kappa = 0;
    double selected_lambda = 0.0;
    SparseHpSolution selected_fit;  // full-data fit at the selected pair
};

struct LoocvOptions {
    std::size_t threads = 1;
    std::size_t node_budget = 10'000'000;
    bool warm_start = true;  // seed leave-one-out solves with the full-data kink set
};

/// Leave-one-out cross-validation of the constrained filter over the grid.
/// For every cell and every held-out day s the filter is refit with the
/// fidelity term dropping day s; the fitted piecewise-linear model still
/// predicts day s (extrapolating at the endpoints). Cells with any failed
/// leave-out solve are marked invalid and excluded from the argmin. Ties
/// prefer smaller kappa, then smaller lambda. The result is identical for
/// any thread count.
TuningResult loocv_sparse_hp(std::span<const double> y, const TuningGrid& grid,
                             const LoocvOptions& opts = {});

enum class ComparatorFilter { Hp, L1, SqrtL1 };

struct MatchedFit {
    double lambda = 0.0;
    double fidelity = 0.0;
    std::vector<double> f;
    KinkSet kinks;  // empty for the quadratic smoother
};

struct FidelityBracket {
    double lo = 0.0;
    double hi = 0.0;
};

/// Finds lambda so the comparator filter fits the data exactly as well as a
/// reference fit (|fidelity - target| <= 1e-6 * max(1, target)), bisecting on
/// the monotone fidelity-of-lambda map. Monotonicity is verified at the
/// bracket endpoints before bisection starts; a target outside the bracket's
/// attainable range is an error naming the endpoint fidelities.
MatchedFit match_fidelity(std::span<const double> y, double target_fidelity,
                          ComparatorFilter filter, const FidelityBracket& bracket,
                          double kink_eta = 1e-6);

/// A bracket that attains every fidelity between the exact fit and the
/// straight line for the given filter.
FidelityBracket default_bracket(std::span<const double> y, ComparatorFilter filter);

/// Serializes the cross-validation surface as `kappa,lambda,score` rows.
std::string tuning_surface_csv(const TuningResult& result);

}  // namespace kinkfilter
