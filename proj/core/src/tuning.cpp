#include "kinkfilter/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "kinkfilter/csv.hpp"
#include "kinkfilter/errors.hpp"

namespace kinkfilter {

void TuningGrid::validate() const {
    if (kappas.empty() || lambdas.empty()) {
        throw ValidationError("tuning grid: kappa and lambda sets must be nonempty");
    }
    for (double l : lambdas) {
        if (!(l > 0.0)) throw ValidationError("tuning grid: lambdas must be positive");
    }
}

TuningResult loocv_sparse_hp(std::span<const double> y, const TuningGrid& grid,
                             const LoocvOptions& opts) {
    grid.validate();
    const std::size_t T = y.size();
    if (T < 10) throw ValidationError("loocv: need at least 10 observations");

    struct CellState {
        std::size_t kappa;
        double lambda;
        SparseHpSolution full_fit;
        std::vector<double> errors;  // squared held-out error per day
        std::vector<double> gaps;
        std::vector<std::uint8_t> failed;
    };
    std::vector<CellState> cells;
    for (std::size_t kappa : grid.kappas) {
        for (double lambda : grid.lambdas) {
            CellState cell;
            cell.kappa = kappa;
            cell.lambda = lambda;
            cell.errors.assign(T, 0.0);
            cell.gaps.assign(T, 0.0);
            cell.failed.assign(T, 0);
            cells.push_back(std::move(cell));
        }
    }

    // Full-data fits first; they seed the leave-one-out solves.
    for (auto& cell : cells) {
        SparseHpProblem problem = SparseHpProblem::from_data(y, cell.kappa, cell.lambda);
        SparseHpOptions sopts;
        sopts.node_budget = opts.node_budget;
        cell.full_fit = solve_bnb(problem, sopts);
    }

    // One task per (cell, held-out day); every task writes its own slot, so
    // the reduction below is identical for any worker count.
    const std::size_t n_tasks = cells.size() * T;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t task = next.fetch_add(1);
            if (task >= n_tasks) break;
            CellState& cell = cells[task / T];
            const std::size_t s = task % T;
            SparseHpProblem problem = SparseHpProblem::from_data(y, cell.kappa, cell.lambda);
            SparseHpOptions sopts;
            sopts.node_budget = opts.node_budget;
            sopts.skip_row = s;
            if (opts.warm_start) sopts.warm_start = cell.full_fit.kinks.indices;
            try {
                SparseHpSolution fit = solve_bnb(problem, sopts);
                const double err = y[s] - fit.f[s];
                cell.errors[s] = err * err;
                cell.gaps[s] = fit.bound_gap;
                if (fit.bound_gap > 0.0) cell.failed[s] = 1;
            } catch (const std::exception&) {
                cell.failed[s] = 1;
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, opts.threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    TuningResult result;
    bool have_selected = false;
    double best_score = 0.0;
    std::size_t best_index = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const CellState& cell = cells[c];
        TuningResult::Cell out;
        out.kappa = cell.kappa;
        out.lambda = cell.lambda;
        double score = 0.0;
        for (double e : cell.errors) score += e;
        out.score = score;
        for (std::size_t s = 0; s < T; ++s) {
            out.diagnostics.max_bound_gap = std::max(out.diagnostics.max_bound_gap, cell.gaps[s]);
            out.diagnostics.failed_solves += cell.failed[s];
        }
        out.diagnostics.valid = out.diagnostics.failed_solves == 0;
        if (out.diagnostics.valid) {
            // Ties prefer smaller kappa, then smaller lambda.
            const double tie = 1e-12 * std::max(1.0, best_score);
            bool better = false;
            if (!have_selected || score < best_score - tie) {
                better = true;
            } else if (score <= best_score + tie) {
                const CellState& incumbent = cells[best_index];
                better = cell.kappa < incumbent.kappa ||
                         (cell.kappa == incumbent.kappa && cell.lambda < incumbent.lambda);
            }
            if (better) {
                have_selected = true;
                best_score = score;
                best_index = c;
            }
        }
        result.cells.push_back(std::move(out));
    }
    if (!have_selected) {
        throw NumericalError("loocv: every grid cell had a failed leave-one-out solve");
    }
    result.selected_kappa = cells[best_index].kappa;
    result.selected_lambda = cells[best_index].lambda;
    result.selected_fit = cells[best_index].full_fit;
    return result;
}

namespace {

struct FilterFit {
    double fidelity = 0.0;
    std::vector<double> f;
};

FilterFit evaluate_filter(std::span<const double> y, ComparatorFilter filter, double lambda) {
    switch (filter) {
        case ComparatorFilter::Hp: {
            HpSolution s = hp_solve(y, lambda);
            return {s.fidelity, std::move(s.f)};
        }
        case ComparatorFilter::L1: {
            L1Solution s = l1_solve(y, lambda);
            if (!s.converged) {
                throw NumericalError("match_fidelity: inner solve did not certify optimality");
            }
            return {s.fidelity, std::move(s.f)};
        }
        case ComparatorFilter::SqrtL1: {
            L1Solution s = sqrt_l1_solve(y, lambda);
            if (!s.converged) {
                throw NumericalError("match_fidelity: inner solve did not certify optimality");
            }
            return {s.fidelity, std::move(s.f)};
        }
    }
    throw InvariantError("match_fidelity: unknown filter");
}

}  // namespace

FidelityBracket default_bracket(std::span<const double> y, ComparatorFilter filter) {
    FidelityBracket bracket;
    bracket.lo = 0.0;
    switch (filter) {
        case ComparatorFilter::Hp:
            bracket.hi = 1e8;
            break;
        case ComparatorFilter::L1:
            bracket.hi = 1.0625 * l1_lambda_max(y);
            break;
        case ComparatorFilter::SqrtL1: {
            // The fixed point maps lambda to the weight 2*lambda*||r||_2, so
            // the straight line is reached once that weight passes the plain
            // filter's maximum at the line's own residual norm.
            std::vector<double> line = ols_line(y);
            double r2 = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double d = y[i] - line[i];
                r2 += d * d;
            }
            const double r = std::sqrt(r2);
            if (r <= 0.0) throw NumericalError("default_bracket: data is exactly a straight line");
            bracket.hi = 1.0625 * l1_lambda_max(y) / (2.0 * r);
            break;
        }
    }
    return bracket;
}

MatchedFit match_fidelity(std::span<const double> y, double target_fidelity,
                          ComparatorFilter filter, const FidelityBracket& bracket,
                          double kink_eta) {
    if (!(bracket.lo >= 0.0) || !(bracket.hi > bracket.lo)) {
        throw ValidationError("match_fidelity: bracket must satisfy 0 <= lo < hi");
    }
    if (!(target_fidelity >= 0.0)) {
        throw ValidationError("match_fidelity: target fidelity must be nonnegative");
    }
    const double tol = 1e-6 * std::max(1.0, target_fidelity);

    FilterFit lo_fit = evaluate_filter(y, filter, bracket.lo);
    FilterFit hi_fit = evaluate_filter(y, filter, bracket.hi);
    if (lo_fit.fidelity > hi_fit.fidelity + tol) {
        throw NumericalError("match_fidelity: fidelity not monotone over the bracket");
    }
    if (target_fidelity < lo_fit.fidelity - tol || target_fidelity > hi_fit.fidelity + tol) {
        throw ValidationError(
            "match_fidelity: target " + csv::format_double(target_fidelity) +
            " outside attainable range [" + csv::format_double(lo_fit.fidelity) + ", " +
            csv::format_double(hi_fit.fidelity) + "] over bracket [" +
            csv::format_double(bracket.lo) + ", " + csv::format_double(bracket.hi) + "]");
    }

    auto finish = [&](double lambda, FilterFit fit) {
        MatchedFit out;
        out.lambda = lambda;
        out.fidelity = fit.fidelity;
        out.kinks = extract_kinks(fit.f, kink_eta);
        out.f = std::move(fit.f);
        return out;
    };

    if (std::abs(lo_fit.fidelity - target_fidelity) <= tol) return finish(bracket.lo, std::move(lo_fit));
    if (std::abs(hi_fit.fidelity - target_fidelity) <= tol) return finish(bracket.hi, std::move(hi_fit));

    double lo = bracket.lo, hi = bracket.hi;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        FilterFit fit = evaluate_filter(y, filter, mid);
        if (std::abs(fit.fidelity - target_fidelity) <= tol) return finish(mid, std::move(fit));
        if (fit.fidelity < target_fidelity) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    throw NumericalError("match_fidelity: bisection failed to reach the target tolerance");
}

std::string tuning_surface_csv(const TuningResult& result) {
    std::ostringstream out;
    out << "kappa,lambda,score\n";
    for (const auto& cell : result.cells) {
        out << cell.kappa << ',' << csv::format_double(cell.lambda) << ','
            << (cell.diagnostics.valid ? csv::format_double(cell.score) : "nan") << '\n';
    }
    return out.str();
}

}  // namespace kinkfilter
