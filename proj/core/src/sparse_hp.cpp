#include "kinkfilter/sparse_hp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <queue>

#include "kinkfilter/errors.hpp"
#include "kinkfilter/pentadiagonal.hpp"
#include "kinkfilter/second_difference.hpp"

namespace kinkfilter {

namespace {

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Objectives within this of each other count as tied; the tie falls back to
/// fewer kinks, then the lexicographically smaller set.
double tie_width(double objective) { return 1e-9 * std::max(1.0, std::abs(objective)); }

bool candidate_better(double obj_a, const std::vector<std::size_t>& kinks_a, double obj_b,
                      const std::vector<std::size_t>& kinks_b) {
    if (obj_a < obj_b - tie_width(obj_b)) return true;
    if (obj_a > obj_b + tie_width(obj_b)) return false;
    if (kinks_a.size() != kinks_b.size()) return kinks_a.size() < kinks_b.size();
    return kinks_a < kinks_b;
}

void validate_kinks(std::span<const std::size_t> kinks, std::size_t T) {
    for (std::size_t j = 0; j < kinks.size(); ++j) {
        if (kinks[j] < 1 || kinks[j] > T - 2) {
            throw ValidationError("restricted_qp: kink index " + std::to_string(kinks[j]) +
                                  " not interior");
        }
        if (j > 0 && kinks[j] <= kinks[j - 1]) {
            throw ValidationError("restricted_qp: kink indices must be strictly increasing");
        }
    }
    if (kinks.size() > T - 2) throw ValidationError("restricted_qp: more kinks than interior points");
}

Eigen::MatrixXd hinge_design(std::size_t T, std::span<const std::size_t> kinks) {
    const auto rows = static_cast<Eigen::Index>(T);
    const auto m = static_cast<Eigen::Index>(2 + kinks.size());
    Eigen::MatrixXd X(rows, m);
    for (Eigen::Index i = 0; i < rows; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = static_cast<double>(i);
        for (std::size_t j = 0; j < kinks.size(); ++j) {
            const double shifted = static_cast<double>(i) - static_cast<double>(kinks[j]);
            X(i, static_cast<Eigen::Index>(2 + j)) = shifted > 0.0 ? shifted : 0.0;
        }
    }
    return X;
}

}  // namespace

SparseHpProblem SparseHpProblem::from_data(std::span<const double> y, std::size_t kappa,
                                           double lambda) {
    if (y.size() < 3) throw ValidationError("sparse filter: need at least 3 observations");
    SparseHpProblem p;
    p.y.assign(y.begin(), y.end());
    p.kappa = kappa;
    p.lambda = lambda;
    p.f_lo = *std::min_element(p.y.begin(), p.y.end());
    p.f_hi = *std::max_element(p.y.begin(), p.y.end());
    p.big_m = 0.0;
    for (std::size_t t = 1; t + 1 < p.y.size(); ++t) {
        p.big_m = std::max(p.big_m, std::abs(curvature_at(p.y, t)));
    }
    p.validate();
    return p;
}

void SparseHpProblem::validate() const {
    if (y.size() < 3) throw ValidationError("sparse filter: need at least 3 observations");
    for (double v : y) {
        if (!std::isfinite(v)) throw ValidationError("sparse filter: non-finite input");
    }
    if (!(lambda >= 0.0)) throw ValidationError("sparse filter: lambda must be nonnegative");
    if (kappa > y.size() - 2) {
        throw ValidationError("sparse filter: kappa exceeds the number of interior points");
    }
    if (!(f_lo <= f_hi)) throw ValidationError("sparse filter: f_lo must not exceed f_hi");
    if (!(big_m >= 0.0)) throw ValidationError("sparse filter: big_m must be nonnegative");
}

KinkBasisModel restricted_qp(std::span<const double> y, std::span<const std::size_t> kinks,
                             double lambda, std::size_t skip_row) {
    const std::size_t T = y.size();
    if (T < 3) throw ValidationError("restricted_qp: need at least 3 observations");
    if (skip_row != kNoSkip && skip_row >= T) throw ValidationError("restricted_qp: skip row out of range");
    validate_kinks(kinks, T);

    const auto m = static_cast<Eigen::Index>(2 + kinks.size());
    Eigen::MatrixXd X = hinge_design(T, kinks);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < T; ++i) {
        if (i == skip_row) continue;
        const auto row = X.row(static_cast<Eigen::Index>(i));
        G.selfadjointView<Eigen::Lower>().rankUpdate(row.transpose(), 1.0);
        rhs += row.transpose() * y[i];
    }
    G = G.selfadjointView<Eigen::Lower>();
    for (Eigen::Index j = 2; j < m; ++j) G(j, j) += lambda;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    Eigen::VectorXd beta = ldlt.solve(rhs);
    const double rhs_scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || !beta.allFinite() ||
        (G * beta - rhs).cwiseAbs().maxCoeff() > 1e-6 * rhs_scale) {
        throw NumericalError("restricted_qp: rank-deficient hinge design for the given kink set");
    }

    KinkBasisModel model;
    model.kinks.assign(kinks.begin(), kinks.end());
    model.intercept = beta(0);
    model.slope = beta(1);
    model.hinge_coeffs.assign(beta.data() + 2, beta.data() + m);
    Eigen::VectorXd fv = X * beta;
    model.f.assign(fv.data(), fv.data() + static_cast<Eigen::Index>(T));
    model.fidelity = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        if (i == skip_row) continue;
        const double d = y[i] - model.f[i];
        model.fidelity += d * d;
    }
    model.ridge_penalty = 0.0;
    for (double c : model.hinge_coeffs) model.ridge_penalty += c * c;
    model.ridge_penalty *= lambda;
    model.objective = model.fidelity + model.ridge_penalty;
    return model;
}

namespace {

// ---------------------------------------------------------------------------
// Shared finalization: canonicalize the kink set, check the box and big-M
// bounds post hoc, and re-solve with an active set on the violated bounds.
// Both solvers apply the identical rule, which keeps them equivalent.
// ---------------------------------------------------------------------------

/// Equality-constrained ridge fit used when the unconstrained optimum leaves
/// the box or curvature bounds. Constraints are kept in "a'beta <= b" form;
/// active ones hold with equality and need nonnegative multipliers.
struct BoundConstraint {
    Eigen::VectorXd a;
    double b = 0.0;
    double violation = 0.0;
};

KinkBasisModel bounded_refit(std::span<const double> y, const std::vector<std::size_t>& kinks,
                             double lambda, std::size_t skip_row, const SparseHpProblem& problem) {
    const std::size_t T = y.size();
    const auto m = static_cast<Eigen::Index>(2 + kinks.size());
    Eigen::MatrixXd X = hinge_design(T, kinks);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < T; ++i) {
        if (i == skip_row) continue;
        const auto row = X.row(static_cast<Eigen::Index>(i));
        G.selfadjointView<Eigen::Lower>().rankUpdate(row.transpose(), 1.0);
        rhs += row.transpose() * y[i];
    }
    G = G.selfadjointView<Eigen::Lower>();
    for (Eigen::Index j = 2; j < m; ++j) G(j, j) += lambda;

    const double slack = 1e-9;
    std::vector<BoundConstraint> active;
    Eigen::VectorXd beta(m);
    for (int pass = 0; pass < 200; ++pass) {
        const auto na = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + na, m + na);
        Eigen::VectorXd kkt_rhs = Eigen::VectorXd::Zero(m + na);
        kkt.topLeftCorner(m, m) = 2.0 * G;
        kkt_rhs.head(m) = 2.0 * rhs;
        for (Eigen::Index j = 0; j < na; ++j) {
            kkt.block(0, m + j, m, 1) = active[static_cast<std::size_t>(j)].a;
            kkt.block(m + j, 0, 1, m) = active[static_cast<std::size_t>(j)].a.transpose();
            kkt_rhs(m + j) = active[static_cast<std::size_t>(j)].b;
        }
        Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(kkt_rhs);
        beta = sol.head(m);

        // Most negative multiplier wins a drop; otherwise the worst
        // violation joins the active set.
        Eigen::Index drop = -1;
        double most_negative = -1e-9;
        for (Eigen::Index j = 0; j < na; ++j) {
            const double mu = sol(m + j);
            if (mu < most_negative) {
                most_negative = mu;
                drop = j;
            }
        }
        if (drop >= 0) {
            active.erase(active.begin() + drop);
            continue;
        }

        Eigen::VectorXd fv = X * beta;
        BoundConstraint worst;
        worst.violation = slack;
        auto consider = [&](const Eigen::VectorXd& a, double b) {
            const double v = a.dot(beta) - b;
            if (v > worst.violation) worst = {a, b, v};
        };
        for (std::size_t i = 0; i < T; ++i) {
            Eigen::VectorXd row = X.row(static_cast<Eigen::Index>(i)).transpose();
            consider(row, problem.f_hi);
            consider(-row, -problem.f_lo);
        }
        for (std::size_t j = 0; j < kinks.size(); ++j) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
            e(static_cast<Eigen::Index>(2 + j)) = 1.0;
            consider(e, problem.big_m);
            consider(-e, problem.big_m);
        }
        if (worst.violation <= slack) break;
        active.push_back(std::move(worst));
        if (pass == 199) throw NumericalError("bounded refit: active-set iteration did not settle");
    }

    KinkBasisModel model;
    model.kinks = kinks;
    model.intercept = beta(0);
    model.slope = beta(1);
    model.hinge_coeffs.assign(beta.data() + 2, beta.data() + m);
    Eigen::VectorXd fv = X * beta;
    model.f.assign(fv.data(), fv.data() + static_cast<Eigen::Index>(T));
    model.fidelity = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        if (i == skip_row) continue;
        const double d = y[i] - model.f[i];
        model.fidelity += d * d;
    }
    model.ridge_penalty = 0.0;
    for (double c : model.hinge_coeffs) model.ridge_penalty += c * c;
    model.ridge_penalty *= lambda;
    model.objective = model.fidelity + model.ridge_penalty;
    return model;
}

SparseHpSolution finalize_solution(const SparseHpProblem& problem, std::size_t skip_row,
                                   std::vector<std::size_t> kinks) {
    const std::size_t T = problem.y.size();
    const double coeff_zero = 1e-12 * std::max(1.0, max_abs(problem.y));

    KinkBasisModel model = restricted_qp(problem.y, kinks, problem.lambda, skip_row);
    // Canonical form: kinks whose curvature is numerically zero are dropped
    // whenever that leaves the objective unchanged (ties prefer fewer kinks).
    bool changed = true;
    while (changed && !model.kinks.empty()) {
        changed = false;
        std::size_t smallest = 0;
        for (std::size_t j = 1; j < model.hinge_coeffs.size(); ++j) {
            if (std::abs(model.hinge_coeffs[j]) < std::abs(model.hinge_coeffs[smallest])) smallest = j;
        }
        if (std::abs(model.hinge_coeffs[smallest]) <= coeff_zero) {
            std::vector<std::size_t> reduced = model.kinks;
            reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(smallest));
            KinkBasisModel trial = restricted_qp(problem.y, reduced, problem.lambda, skip_row);
            if (trial.objective <= model.objective + tie_width(model.objective)) {
                model = std::move(trial);
                changed = true;
            }
        }
    }

    SparseHpSolution sol;
    const double bound_slack = 1e-9;
    bool violated = false;
    for (double v : model.f) {
        if (v < problem.f_lo - bound_slack || v > problem.f_hi + bound_slack) violated = true;
    }
    for (double c : model.hinge_coeffs) {
        if (std::abs(c) > problem.big_m + bound_slack) violated = true;
    }
    if (violated) {
        sol.bounds_violation = true;
        model = bounded_refit(problem.y, model.kinks, problem.lambda, skip_row, problem);
        sol.bounds_refit_applied = true;
    }

    sol.f = model.f;
    sol.kinks.indices = model.kinks;
    sol.kinks.eta = 0.0;  // structural: the hinge basis is exact off the kink set
    sol.z.assign(T - 2, 0);
    for (std::size_t k : model.kinks) sol.z[k - 1] = 1;
    sol.objective = model.objective;
    sol.fidelity = model.fidelity;
    sol.penalty = model.ridge_penalty;
    return sol;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration (the equivalence oracle).
// ---------------------------------------------------------------------------

double total_subsets(std::size_t n, std::size_t k_max) {
    double total = 0.0;
    double binom = 1.0;  // C(n, 0)
    for (std::size_t j = 0; j <= k_max; ++j) {
        total += binom;
        binom = binom * static_cast<double>(n - j) / static_cast<double>(j + 1);
        if (total > 1e18) break;
    }
    return total;
}

}  // namespace

SparseHpSolution solve_exhaustive(const SparseHpProblem& problem, const SparseHpOptions& opts) {
    problem.validate();
    const std::size_t T = problem.y.size();
    const std::size_t P = T - 2;
    const std::size_t kappa = std::min(problem.kappa, P);

    if (total_subsets(P, kappa) > static_cast<double>(opts.enumeration_cap)) {
        throw BudgetError("solve_exhaustive: enumeration cap of " +
                          std::to_string(opts.enumeration_cap) + " kink sets exceeded");
    }

    bool have_best = false;
    double best_obj = 0.0;
    std::vector<std::size_t> best_kinks;

    std::vector<std::size_t> combo;
    for (std::size_t size = 0; size <= kappa; ++size) {
        combo.resize(size);
        for (std::size_t j = 0; j < size; ++j) combo[j] = j + 1;  // interior indices
        while (true) {
            KinkBasisModel model = restricted_qp(problem.y, combo, problem.lambda, opts.skip_row);
            if (!have_best || candidate_better(model.objective, combo, best_obj, best_kinks)) {
                have_best = true;
                best_obj = model.objective;
                best_kinks = combo;
            }
            if (size == 0) break;
            // Advance to the next lexicographic combination of interior indices.
            std::size_t j = size;
            while (j > 0) {
                --j;
                if (combo[j] < P - (size - 1 - j)) {
                    ++combo[j];
                    for (std::size_t l = j + 1; l < size; ++l) combo[l] = combo[l - 1] + 1;
                    break;
                }
                if (j == 0) {
                    j = size + 1;  // exhausted
                    break;
                }
            }
            if (j == size + 1) break;
        }
    }

    return finalize_solution(problem, opts.skip_row, std::move(best_kinks));
}

// ---------------------------------------------------------------------------
// Best-first branch and bound.
// ---------------------------------------------------------------------------

namespace {

/// Precomputed normal equations over the full hinge dictionary
/// [1, t, hinge_1, ..., hinge_P]. A candidate kink set is evaluated by
/// growing a Cholesky factor one column at a time; the objective follows
/// from the explained-variance identity
///   fidelity + ridge = y'y - rhs' beta = y'y - ||L^{-1} rhs||^2,
/// about a hundred flops per visited set. Selection happens here; the
/// returned solution is always re-fit through restricted_qp.
class HingeGram {
public:
    HingeGram(std::span<const double> y, double lambda, std::size_t skip, std::size_t max_kinks)
        : T_(y.size()), cols_(T_ - 2 + 2), lambda_(lambda), max_m_(2 + max_kinks) {
        gram_.assign(cols_ * cols_, 0.0);
        rhs_.assign(cols_, 0.0);

        // Power sums over 1..m give every dictionary inner product in closed
        // form; the hinge at interior position p+1 is max(i - (p+1), 0).
        const auto n = static_cast<double>(T_);
        auto sum1 = [](double m) { return m * (m + 1.0) / 2.0; };
        auto sum2 = [](double m) { return m * (m + 1.0) * (2.0 * m + 1.0) / 6.0; };
        auto hinge_len = [&](std::size_t col) {
            return n - 1.0 - static_cast<double>(col - 1);  // col >= 2 -> kink at col-1
        };
        auto set = [&](std::size_t a, std::size_t b, double v) {
            gram_[std::max(a, b) * cols_ + std::min(a, b)] = v;
        };
        set(0, 0, n);
        set(1, 0, sum1(n - 1.0));
        set(1, 1, sum2(n - 1.0));
        for (std::size_t c = 2; c < cols_; ++c) {
            const double m = hinge_len(c);
            const double k = static_cast<double>(c - 1);
            set(c, 0, sum1(m));
            set(c, 1, sum2(m) + k * sum1(m));
            for (std::size_t d = 2; d <= c; ++d) {
                // later kink index is c-1 (shorter hinge)
                const double gap = static_cast<double>(c - d);
                set(c, d, sum2(m) + gap * sum1(m));
            }
        }

        // Data-dependent pieces via suffix sums.
        yty_ = 0.0;
        double suffix = 0.0, suffix_weighted = 0.0;
        std::vector<double> suf(T_ + 1, 0.0), suf_w(T_ + 1, 0.0);
        for (std::size_t i = T_; i-- > 0;) {
            suffix += y[i];
            suffix_weighted += static_cast<double>(i) * y[i];
            suf[i] = suffix;
            suf_w[i] = suffix_weighted;
            yty_ += y[i] * y[i];
        }
        rhs_[0] = suf[0];
        rhs_[1] = suf_w[0];
        for (std::size_t c = 2; c < cols_; ++c) {
            const std::size_t k = c - 1;
            rhs_[c] = suf_w[k + 1] - static_cast<double>(k) * suf[k + 1];
        }

        if (skip != kNoSkip) {
            // Drop one fidelity row by a rank-one downdate.
            std::vector<double> x(cols_, 0.0);
            x[0] = 1.0;
            x[1] = static_cast<double>(skip);
            for (std::size_t c = 2; c < cols_; ++c) {
                const double shifted = x[1] - static_cast<double>(c - 1);
                x[c] = shifted > 0.0 ? shifted : 0.0;
            }
            for (std::size_t a = 0; a < cols_; ++a) {
                if (x[a] == 0.0) continue;
                double* gram_row = gram_.data() + a * cols_;
                for (std::size_t b = 0; b <= a; ++b) gram_row[b] -= x[a] * x[b];
                rhs_[a] -= x[a] * y[skip];
            }
            yty_ -= y[skip] * y[skip];
        }

        chol_.assign(max_m_ * max_m_, 0.0);
        solved_.assign(max_m_, 0.0);
        explained_stack_.assign(max_m_ + 1, 0.0);
        active_.reserve(max_m_);
        // The affine part [1, t] is shared by every candidate.
        if (!push_column(0) || !push_column(1)) {
            throw NumericalError("hinge gram: affine block is singular");
        }
        base_depth_ = 2;
    }

    [[nodiscard]] double gram_at(std::size_t a, std::size_t b) const {
        return a >= b ? gram_[a * cols_ + b] : gram_[b * cols_ + a];
    }

    /// Appends the dictionary column for interior position p (0-based).
    /// Returns false when the factor pivot degenerates, in which case the
    /// caller must skip the candidate (and no state is consumed).
    bool push_kink(std::size_t position) { return push_column(2 + position); }

    void pop() {
        active_.pop_back();
        explained_ = explained_stack_[active_.size()];
    }

    void reset_to_base() {
        active_.resize(base_depth_);
        explained_ = explained_stack_[base_depth_];
    }

    /// Objective of the candidate defined by the current column stack.
    [[nodiscard]] double objective() const { return yty_ - explained_; }

    /// One-shot evaluation of a sorted kink set; NaN when degenerate.
    double evaluate_set(std::span<const std::size_t> kinks) {
        reset_to_base();
        for (std::size_t k : kinks) {
            if (!push_kink(k - 1)) {
                reset_to_base();
                return std::numeric_limits<double>::quiet_NaN();
            }
        }
        const double value = objective();
        reset_to_base();
        return value;
    }

private:
    bool push_column(std::size_t column) {
        const std::size_t m = active_.size();
        if (m >= max_m_) throw InvariantError("hinge gram: column stack overflow");
        double* row = chol_.data() + m * max_m_;
        for (std::size_t i = 0; i < m; ++i) {
            double v = gram_at(column, active_[i]);
            const double* li = chol_.data() + i * max_m_;
            for (std::size_t l = 0; l < i; ++l) v -= row[l] * li[l];
            row[i] = v / li[i];
        }
        double diag = gram_at(column, column);
        if (column >= 2) diag += lambda_;  // ridge on hinge coefficients only
        for (std::size_t l = 0; l < m; ++l) diag -= row[l] * row[l];
        if (!(diag > 1e-13 * std::max(1.0, gram_at(column, column)))) {
            return false;  // numerically singular pivot
        }
        row[m] = std::sqrt(diag);
        double z = rhs_[column];
        for (std::size_t l = 0; l < m; ++l) z -= row[l] * solved_[l];
        z /= row[m];
        explained_stack_[m] = explained_;
        solved_[m] = z;
        explained_ += z * z;
        active_.push_back(column);
        return true;
    }

    std::size_t T_;
    std::size_t cols_;
    double lambda_;
    std::size_t max_m_;
    double yty_ = 0.0;
    std::vector<double> gram_;  // lower triangle, row-major full storage
    std::vector<double> rhs_;
    std::vector<double> chol_;
    std::vector<double> solved_;
    std::vector<std::size_t> active_;
    double explained_ = 0.0;
    std::vector<double> explained_stack_;
    std::size_t base_depth_ = 0;
};

/// Number of kink sets of size <= budget over n free positions, saturating.
double completion_count(std::size_t n, std::size_t budget) {
    double total = 0.0;
    double binom = 1.0;
    for (std::size_t j = 0; j <= budget && j <= n; ++j) {
        total += binom;
        binom = binom * static_cast<double>(n - j) / static_cast<double>(j + 1);
        if (total > 1e15) return total;
    }
    return total;
}

struct BnbNode {
    std::shared_ptr<const BnbNode> parent;
    std::size_t position = 0;  // interior position decided at this node
    bool forbidden = false;    // otherwise: allowed (counts toward kappa)
    double bound = 0.0;        // valid lower bound (possibly inherited)
    std::uint64_t seq = 0;
};

using BnbNodePtr = std::shared_ptr<const BnbNode>;

struct NodeOrder {
    bool operator()(const BnbNodePtr& a, const BnbNodePtr& b) const {
        if (a->bound != b->bound) return a->bound > b->bound;  // min-heap
        return a->seq > b->seq;
    }
};

}  // namespace

SparseHpSolution solve_bnb(const SparseHpProblem& problem, const SparseHpOptions& opts) {
    problem.validate();
    const std::size_t T = problem.y.size();
    const std::size_t P = T - 2;  // interior positions, 0-based p <-> interior index p+1
    const std::size_t kappa = problem.kappa;
    const double lambda = problem.lambda;
    const std::size_t skip = opts.skip_row;
    if (skip != kNoSkip && skip >= T) throw ValidationError("solve_bnb: skip row out of range");
    std::span<const double> y(problem.y);

    const double y_scale = std::max(1.0, max_abs(y));
    const double big_weight = 1e7 * std::max(1.0, lambda);
    const double weight_floor = 1e-15;

    std::vector<double> fidelity_diag(T, 1.0);
    if (skip != kNoSkip) fidelity_diag[skip] = 1e-13;  // keeps the system definite

    // Penalized relaxation: the equality constraints on forbidden positions
    // are replaced by big finite curvature weights, which can only lower the
    // minimum, so the value is a valid bound on every completion of the node
    // at pentadiagonal cost. The deflation covers the factorization error
    // and the tiny floor/skip weights.
    std::vector<double> w(P);
    auto node_relaxation = [&](const std::vector<std::uint8_t>& forbidden_mask,
                               std::vector<double>& f_out) -> double {
        for (std::size_t p = 0; p < P; ++p) {
            w[p] = forbidden_mask[p] ? big_weight : std::max(lambda, weight_floor);
        }
        PentadiagonalFactor factor = factor_curvature_system(w, fidelity_diag);
        std::vector<double> rhs(T);
        for (std::size_t i = 0; i < T; ++i) rhs[i] = fidelity_diag[i] * y[i];
        f_out = factor.solve(rhs);
        double value = 0.0;
        for (std::size_t i = 0; i < T; ++i) {
            if (i == skip) continue;
            const double d = y[i] - f_out[i];
            value += d * d;
        }
        for (std::size_t p = 0; p < P; ++p) {
            const double c = curvature_at(f_out, p + 1);
            value += w[p] * c * c;
        }
        const double slack = 1e-7 * std::max(1.0, std::abs(value)) +
                             1e-10 * static_cast<double>(T) * y_scale * y_scale;
        return value - slack;
    };

    HingeGram workspace(y, lambda, skip, std::min(kappa, P));

    bool have_best = false;
    double best_obj = 0.0;
    std::vector<std::size_t> best_kinks;
    auto offer_candidate = [&](std::vector<std::size_t> kinks) {
        std::sort(kinks.begin(), kinks.end());
        kinks.erase(std::unique(kinks.begin(), kinks.end()), kinks.end());
        double objective = workspace.evaluate_set(kinks);
        if (std::isnan(objective)) {
            objective = restricted_qp(y, kinks, lambda, skip).objective;
        }
        if (!have_best || candidate_better(objective, kinks, best_obj, best_kinks)) {
            have_best = true;
            best_obj = objective;
            best_kinks = std::move(kinks);
        }
    };

    // Exact closure of a node by enumerating its completions on the shared
    // workspace; candidates are screened on the objective alone before the
    // merged kink set is materialized.
    std::vector<std::size_t> enum_chosen;
    auto offer_enumerated = [&](const std::vector<std::size_t>& allowed_kinks) {
        const double objective = workspace.objective();
        if (have_best && objective > best_obj + tie_width(best_obj)) return;
        std::vector<std::size_t> merged = allowed_kinks;
        for (std::size_t p : enum_chosen) merged.push_back(p + 1);
        std::sort(merged.begin(), merged.end());
        if (!have_best || candidate_better(objective, merged, best_obj, best_kinks)) {
            have_best = true;
            best_obj = objective;
            best_kinks = std::move(merged);
        }
    };
    std::function<void(const std::vector<std::size_t>&, const std::vector<std::size_t>&,
                       std::size_t, std::size_t)>
        enumerate_completions = [&](const std::vector<std::size_t>& allowed_kinks,
                                    const std::vector<std::size_t>& undecided, std::size_t start,
                                    std::size_t remaining) {
            if (remaining == 0) return;
            for (std::size_t idx = start; idx < undecided.size(); ++idx) {
                if (!workspace.push_kink(undecided[idx])) continue;  // degenerate pivot
                enum_chosen.push_back(undecided[idx]);
                offer_enumerated(allowed_kinks);
                enumerate_completions(allowed_kinks, undecided, idx + 1, remaining - 1);
                enum_chosen.pop_back();
                workspace.pop();
            }
        };

    // Incumbent seeds: the straight line, the top-kappa curvature positions
    // of the root relaxation, and any caller-provided warm start.
    std::vector<std::uint8_t> mask(P, 0);
    std::vector<double> f_rel;
    node_relaxation(mask, f_rel);
    {
        offer_candidate({});
        std::vector<std::size_t> order(P);
        for (std::size_t p = 0; p < P; ++p) order[p] = p;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(curvature_at(f_rel, a + 1)) > std::abs(curvature_at(f_rel, b + 1));
        });
        std::vector<std::size_t> greedy;
        for (std::size_t j = 0; j < std::min(kappa, P); ++j) greedy.push_back(order[j] + 1);
        offer_candidate(std::move(greedy));
        if (opts.warm_start && opts.warm_start->size() <= kappa) {
            bool interior = true;
            for (std::size_t k : *opts.warm_start) {
                if (k < 1 || k > T - 2) interior = false;
            }
            if (interior) offer_candidate(*opts.warm_start);
        }
    }

    const double prune_eps = 1e-12;
    std::priority_queue<BnbNodePtr, std::vector<BnbNodePtr>, NodeOrder> open;
    std::uint64_t seq = 0;
    {
        auto root = std::make_shared<BnbNode>();
        root->bound = 0.0;  // the objective is a sum of squares
        root->seq = seq++;
        open.push(std::move(root));
    }

    std::size_t nodes = 0;
    bool budget_hit = false;
    double frontier_bound = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> allowed;    // 0-based positions fixed as kinks
    std::vector<std::size_t> undecided;  // 0-based positions still free
    while (!open.empty()) {
        BnbNodePtr node = open.top();
        open.pop();
        if (node->bound >= best_obj - prune_eps) continue;  // stale entry
        if (nodes >= opts.node_budget) {
            budget_hit = true;
            frontier_bound = node->bound;
            break;
        }
        ++nodes;

        // Reconstruct the decisions along the parent chain.
        std::fill(mask.begin(), mask.end(), 0);
        allowed.clear();
        for (const BnbNode* n = node.get(); n->parent; n = n->parent.get()) {
            if (n->forbidden) {
                mask[n->position] = 1;
            } else {
                allowed.push_back(n->position);
            }
        }
        std::sort(allowed.begin(), allowed.end());

        double bound = node_relaxation(mask, f_rel);
        if (bound >= best_obj - prune_eps) continue;

        // Near the incumbent the deflated cheap bound is too blunt to close
        // the node; the exact restricted fit over all unforbidden positions
        // decides.
        if (bound >= best_obj - (1e-5 * std::max(1.0, std::abs(best_obj)) +
                                 1e-9 * static_cast<double>(T) * y_scale * y_scale)) {
            std::vector<std::size_t> unforbidden;
            for (std::size_t p = 0; p < P; ++p) {
                if (!mask[p]) unforbidden.push_back(p + 1);
            }
            KinkBasisModel relax = restricted_qp(y, unforbidden, lambda, skip);
            const double exact_bound =
                relax.objective - 1e-10 * std::max(1.0, std::abs(relax.objective));
            bound = std::max(bound, exact_bound);
            if (bound >= best_obj - prune_eps) continue;
        }

        undecided.clear();
        for (std::size_t p = 0; p < P; ++p) {
            if (!mask[p] && !std::binary_search(allowed.begin(), allowed.end(), p)) {
                undecided.push_back(p);
            }
        }

        std::vector<std::size_t> allowed_kinks;
        allowed_kinks.reserve(allowed.size());
        for (std::size_t p : allowed) allowed_kinks.push_back(p + 1);

        if (allowed.size() >= kappa || undecided.empty()) {
            offer_candidate(std::move(allowed_kinks));
            continue;
        }

        // When the node's completion count is small enough, close it exactly
        // by enumeration on the incremental-Cholesky workspace.
        if (completion_count(undecided.size(), kappa - allowed.size()) <=
            static_cast<double>(opts.subtree_enumeration_cap)) {
            workspace.reset_to_base();
            bool base_ok = true;
            for (std::size_t k : allowed_kinks) {
                if (!workspace.push_kink(k - 1)) {
                    base_ok = false;
                    break;
                }
            }
            if (base_ok) {
                enum_chosen.clear();
                offer_enumerated(allowed_kinks);
                enumerate_completions(allowed_kinks, undecided, 0, kappa - allowed.size());
                workspace.reset_to_base();
                continue;
            }
            workspace.reset_to_base();  // degenerate base: fall through and branch
        }

        // Rounded candidate: the fixed kinks plus the largest undecided
        // relaxation curvatures.
        {
            std::vector<std::size_t> order = undecided;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return std::abs(curvature_at(f_rel, a + 1)) > std::abs(curvature_at(f_rel, b + 1));
            });
            std::vector<std::size_t> cand = allowed_kinks;
            for (std::size_t j = 0; j < std::min(kappa - allowed.size(), order.size()); ++j) {
                cand.push_back(order[j] + 1);
            }
            offer_candidate(std::move(cand));
        }
        if (bound >= best_obj - prune_eps) continue;

        // Branch on the undecided position with the largest relaxation
        // curvature; ties go to the smallest position.
        std::size_t branch_pos = undecided.front();
        double branch_curv = -1.0;
        for (std::size_t p : undecided) {
            const double c = std::abs(curvature_at(f_rel, p + 1));
            if (c > branch_curv) {
                branch_curv = c;
                branch_pos = p;
            }
        }
        for (bool forbid : {true, false}) {
            auto child = std::make_shared<BnbNode>();
            child->parent = node;
            child->position = branch_pos;
            child->forbidden = forbid;
            child->bound = bound;  // inherited; recomputed when popped
            child->seq = seq++;
            open.push(std::move(child));
        }
    }

    if (!have_best) throw InvariantError("solve_bnb: no incumbent found");

    SparseHpSolution out = finalize_solution(problem, skip, std::move(best_kinks));
    out.nodes_explored = nodes;
    if (budget_hit) {
        double min_bound = frontier_bound;
        while (!open.empty()) {
            min_bound = std::min(min_bound, open.top()->bound);
            open.pop();
        }
        out.bound_gap = std::max(0.0, out.objective - min_bound);
    }
    return out;
}

}  // namespace kinkfilter
