#include "kinkfilter/l1_filter.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "kinkfilter/errors.hpp"
#include "kinkfilter/hp_filter.hpp"
#include "kinkfilter/pentadiagonal.hpp"
#include "kinkfilter/second_difference.hpp"

namespace kinkfilter {

namespace {

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double input_scale(std::span<const double> y) { return std::max(1.0, max_abs(y)); }

void check_input(std::span<const double> y, double lambda) {
    if (y.size() < 3) throw ValidationError("trend filter: need at least 3 observations");
    if (!(lambda >= 0.0)) throw ValidationError("trend filter: lambda must be nonnegative");
    for (double v : y) {
        if (!std::isfinite(v)) throw ValidationError("trend filter: non-finite input");
    }
}

double soft_threshold(double v, double k) {
    if (v > k) return v - k;
    if (v < -k) return v + k;
    return 0.0;
}

/// Dual vector nu with D^T nu ~= 2(y - f), the least-squares multiplier of
/// the stationarity condition.
std::vector<double> dual_from_residual(const SecondDifference& diff,
                                       const PentadiagonalFactor& gram_dd,
                                       std::span<const double> y, std::span<const double> f) {
    std::vector<double> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - f[i];
    auto dr = diff.apply(r);
    for (double& v : dr) v *= 2.0;
    return gram_dd.solve(dr);
}

struct KktReport {
    double residual = 0.0;
};

/// Measured subgradient residual at (f, nu): stationarity, dual feasibility
/// and sign consistency on the active curvature positions.
KktReport measure_kkt(const SecondDifference& diff, std::span<const double> y,
                      std::span<const double> f, std::span<const double> nu, double lambda,
                      double active_eps) {
    const std::size_t T = y.size();
    auto dtnu = diff.apply_transpose(nu);
    double stat = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        stat = std::max(stat, std::abs(2.0 * (f[i] - y[i]) + dtnu[i]));
    }
    auto df = diff.apply(f);
    double feas = 0.0, sign = 0.0;
    for (std::size_t t = 0; t < df.size(); ++t) {
        feas = std::max(feas, std::abs(nu[t]) - lambda);
        if (std::abs(df[t]) > active_eps) {
            sign = std::max(sign, std::abs(nu[t] - lambda * (df[t] > 0 ? 1.0 : -1.0)));
        }
    }
    return {std::max({stat, feas, sign})};
}

void finish_solution(L1Solution& sol, std::span<const double> y, const SecondDifference& diff) {
    sol.fidelity = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - sol.f[i];
        sol.fidelity += d * d;
    }
    sol.l1_penalty = 0.0;
    for (double v : diff.apply(sol.f)) sol.l1_penalty += std::abs(v);
}

/// Exact refit on a candidate support with fixed curvature signs. Solves the
/// equality-constrained problem in the hinge basis and verifies the full
/// optimality system; returns false when the candidate is not optimal.
bool try_polish(std::span<const double> y, double lambda, const std::vector<std::size_t>& support,
                const std::vector<double>& signs, const SecondDifference& diff,
                const PentadiagonalFactor& gram_dd, double tol, std::vector<double>& f_out,
                double& kkt_out) {
    const std::size_t T = y.size();
    const std::size_t m = 2 + support.size();
    Eigen::MatrixXd X(T, m);
    for (std::size_t i = 0; i < T; ++i) {
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        X(static_cast<Eigen::Index>(i), 1) = static_cast<double>(i);
        for (std::size_t j = 0; j < support.size(); ++j) {
            const double shifted = static_cast<double>(i) - static_cast<double>(support[j]);
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 + j)) =
                shifted > 0.0 ? shifted : 0.0;
        }
    }
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(T));
    Eigen::VectorXd rhs = X.transpose() * yv;
    for (std::size_t j = 0; j < support.size(); ++j) {
        rhs(static_cast<Eigen::Index>(2 + j)) -= 0.5 * lambda * signs[j];
    }
    Eigen::MatrixXd gram = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) return false;
    Eigen::VectorXd beta = ldlt.solve(rhs);
    // Hinge coefficients are the curvatures; their signs must match the
    // candidate pattern or the support is wrong.
    for (std::size_t j = 0; j < support.size(); ++j) {
        const double c = beta(static_cast<Eigen::Index>(2 + j));
        if (c * signs[j] <= 0.0) return false;
    }
    std::vector<double> f(T);
    Eigen::VectorXd fv = X * beta;
    for (std::size_t i = 0; i < T; ++i) f[i] = fv(static_cast<Eigen::Index>(i));
    auto nu = dual_from_residual(diff, gram_dd, y, f);
    auto report = measure_kkt(diff, y, f, nu, lambda, tol);
    if (report.residual > tol) return false;
    f_out = std::move(f);
    kkt_out = report.residual;
    return true;
}

}  // namespace

L1Solution l1_solve(std::span<const double> y, double lambda, const L1Options& opts) {
    check_input(y, lambda);
    const std::size_t T = y.size();
    const double scale = input_scale(y);
    const double tol = opts.tol_opt * scale;
    SecondDifference diff(T);

    L1Solution sol;
    sol.lambda = lambda;

    if (lambda == 0.0) {
        sol.f.assign(y.begin(), y.end());
        sol.converged = true;
        finish_solution(sol, y, diff);
        return sol;
    }

    PentadiagonalFactor gram_dd = factor_gram_dd(T);

    // Above the derived maximum weight the solution is the straight line.
    {
        auto dy = diff.apply(y);
        for (double& v : dy) v *= 2.0;
        auto nu_line = gram_dd.solve(dy);
        if (lambda >= max_abs(nu_line)) {
            sol.f = ols_line(y);
            auto report = measure_kkt(diff, y, sol.f, nu_line, lambda, tol);
            sol.kkt_residual = report.residual;
            sol.converged = report.residual <= tol;
            finish_solution(sol, y, diff);
            return sol;
        }
    }

    // Operator splitting on z = Df with self-tuned penalty parameter.
    double rho = std::max(1.0, lambda);
    std::vector<double> w(T - 2, 0.5 * rho);
    PentadiagonalFactor factor = factor_curvature_system(w);
    std::vector<double> f(y.begin(), y.end());
    std::vector<double> z = diff.apply(f);
    std::vector<double> u(T - 2, 0.0);

    const std::size_t check_every = 25;
    double best_kkt = std::numeric_limits<double>::infinity();
    std::vector<double> best_f = f;

    for (std::size_t iter = 1; iter <= opts.max_iter; ++iter) {
        sol.iterations = iter;
        // f-update: (I + (rho/2) D'D) f = y + (rho/2) D'(z - u)
        std::vector<double> zu(T - 2);
        for (std::size_t t = 0; t < zu.size(); ++t) zu[t] = z[t] - u[t];
        auto rhs = diff.apply_transpose(zu);
        for (std::size_t i = 0; i < T; ++i) rhs[i] = y[i] + 0.5 * rho * rhs[i];
        f = factor.solve(rhs);

        auto df = diff.apply(f);
        std::vector<double> z_old = z;
        for (std::size_t t = 0; t < z.size(); ++t) {
            const double v = df[t] + u[t];
            z[t] = soft_threshold(v, lambda / rho);
            u[t] = v - z[t];
        }

        // nu = rho * u satisfies the dual bound and sign rules exactly by
        // construction of the threshold; stationarity drift is what remains.
        std::vector<double> nu(T - 2);
        for (std::size_t t = 0; t < nu.size(); ++t) nu[t] = rho * u[t];
        auto report = measure_kkt(diff, y, f, nu, lambda, tol);
        if (report.residual < best_kkt) {
            best_kkt = report.residual;
            best_f = f;
        }
        if (report.residual <= tol) {
            sol.f = f;
            sol.kkt_residual = report.residual;
            sol.converged = true;
            finish_solution(sol, y, diff);
            return sol;
        }

        if (iter % check_every == 0) {
            // Try an exact refit on the current split-variable support.
            std::vector<std::size_t> support;
            std::vector<double> signs;
            for (std::size_t t = 0; t < z.size(); ++t) {
                if (z[t] != 0.0) {
                    support.push_back(t + 1);  // interior index
                    signs.push_back(z[t] > 0 ? 1.0 : -1.0);
                }
            }
            std::vector<double> f_pol;
            double kkt_pol = 0.0;
            if (try_polish(y, lambda, support, signs, diff, gram_dd, tol, f_pol, kkt_pol)) {
                sol.f = std::move(f_pol);
                sol.kkt_residual = kkt_pol;
                sol.converged = true;
                finish_solution(sol, y, diff);
                return sol;
            }

            // Residual balancing, factor-2 adjustment when the primal and
            // dual residuals differ by more than 10x.
            double primal = 0.0;
            for (std::size_t t = 0; t < z.size(); ++t) {
                const double d = df[t] - z[t];
                primal += d * d;
            }
            primal = std::sqrt(primal);
            double dual = 0.0;
            {
                std::vector<double> dz(T - 2);
                for (std::size_t t = 0; t < dz.size(); ++t) dz[t] = z[t] - z_old[t];
                auto dt = diff.apply_transpose(dz);
                for (double v : dt) dual += v * v;
                dual = rho * std::sqrt(dual);
            }
            if (primal > 10.0 * dual) {
                rho *= 2.0;
                for (double& v : u) v *= 0.5;
                std::fill(w.begin(), w.end(), 0.5 * rho);
                factor = factor_curvature_system(w);
            } else if (dual > 10.0 * primal) {
                rho *= 0.5;
                for (double& v : u) v *= 2.0;
                std::fill(w.begin(), w.end(), 0.5 * rho);
                factor = factor_curvature_system(w);
            }
        }
    }

    sol.f = best_f;
    sol.kkt_residual = best_kkt;
    sol.converged = false;
    finish_solution(sol, y, diff);
    return sol;
}

L1Solution sqrt_l1_solve(std::span<const double> y, double lambda, const L1Options& opts) {
    check_input(y, lambda);
    const std::size_t T = y.size();
    const double scale = input_scale(y);
    SecondDifference diff(T);

    if (lambda == 0.0) {
        L1Solution sol;
        sol.f.assign(y.begin(), y.end());
        sol.lambda = 0.0;
        sol.converged = true;
        finish_solution(sol, y, diff);
        return sol;
    }

    auto residual_norm = [&](std::span<const double> f) {
        double s = 0.0;
        for (std::size_t i = 0; i < T; ++i) {
            const double d = y[i] - f[i];
            s += d * d;
        }
        return std::sqrt(s);
    };

    // At an optimum with r = y - f != 0 the squared-fidelity problem with
    // weight 2*lambda*||r||_2 has the same stationarity system, so iterate
    // that implied weight to its fixed point.
    std::vector<double> f = hp_solve(y, 1.0).f;
    double weight = 2.0 * lambda * residual_norm(f);
    L1Solution inner;
    std::size_t total_iterations = 0;
    const std::size_t max_outer = 200;
    for (std::size_t outer = 0; outer < max_outer; ++outer) {
        if (!(weight > 0.0) || residual_norm(f) <= 1e-13 * scale) {
            throw NumericalError(
                "sqrt_l1_solve: residual collapsed to zero (degenerate instance; the square-root "
                "objective is non-differentiable there)");
        }
        inner = l1_solve(y, weight, opts);
        total_iterations += inner.iterations;
        f = inner.f;
        const double next = 2.0 * lambda * residual_norm(f);
        if (residual_norm(f) <= 1e-13 * scale) {
            throw NumericalError(
                "sqrt_l1_solve: residual collapsed to zero (degenerate instance; the square-root "
                "objective is non-differentiable there)");
        }
        if (std::abs(next - weight) <= 1e-10 * std::max(weight, 1e-300)) {
            L1Solution sol = inner;
            sol.lambda = lambda;
            sol.effective_weight = next;
            sol.iterations = total_iterations;
            return sol;
        }
        weight = next;
    }
    throw NumericalError("sqrt_l1_solve: implied weight failed to stabilize");
}

namespace {

/// Change-of-variables pieces for the reduction to a plain penalized
/// regression: theta = Df, a projector P that concentrates out the affine
/// block, and the transformed design X = (I - P) G2.
struct CurvatureReduction {
    Eigen::MatrixXd projector;  // T x T
    Eigen::MatrixXd design;     // T x (T-2)
};

CurvatureReduction build_curvature_reduction(std::size_t length) {
    const auto T = static_cast<Eigen::Index>(length);
    const Eigen::Index m = T - 2;
    // Dense second-difference matrix, partitioned D = (D3, D2) with D3 the
    // leading square block (unit upper-triangular).
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, T);
    for (Eigen::Index r = 0; r < m; ++r) {
        D(r, r) = 1.0;
        D(r, r + 1) = -2.0;
        D(r, r + 2) = 1.0;
    }
    Eigen::MatrixXd D3 = D.leftCols(m);
    Eigen::MatrixXd D2 = D.rightCols(2);
    Eigen::MatrixXd D3inv =
        D3.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(m, m));

    Eigen::MatrixXd G2 = Eigen::MatrixXd::Zero(T, m);
    G2.topRows(m) = D3inv;
    Eigen::MatrixXd g1(T, 2);
    g1.topRows(m) = -D3inv * D2;
    g1.bottomRows(2) = Eigen::MatrixXd::Identity(2, 2);

    CurvatureReduction parts;
    parts.projector = g1 * (g1.transpose() * g1).ldlt().solve(g1.transpose());
    parts.design = G2 - parts.projector * G2;
    return parts;
}

}  // namespace

L1Solution l1_via_lasso_oracle(std::span<const double> y, double lambda) {
    check_input(y, lambda);
    const auto T = static_cast<Eigen::Index>(y.size());
    const Eigen::Index m = T - 2;
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), T);

    CurvatureReduction parts = build_curvature_reduction(y.size());
    const Eigen::MatrixXd& P = parts.projector;
    const Eigen::MatrixXd& X = parts.design;
    Eigen::VectorXd ytilde = yv - P * yv;

    // LASSO min ||ytilde - X theta||^2 + lambda ||theta||_1 by cyclic
    // coordinate descent in covariance form.
    Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::VectorXd Xty = X.transpose() * ytilde;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
    std::size_t sweeps = 0;

    if (lambda == 0.0) {
        theta = XtX.ldlt().solve(Xty);
    } else {
        Eigen::VectorXd col_norms(m);
        for (Eigen::Index j = 0; j < m; ++j) col_norms(j) = XtX(j, j);
        Eigen::VectorXd grad = Xty;  // X'(ytilde - X theta) at theta = 0
        const double cd_tol = 1e-10 * std::max(1.0, Xty.cwiseAbs().maxCoeff());
        const std::size_t max_sweeps = 100000;
        for (sweeps = 1; sweeps <= max_sweeps; ++sweeps) {
            double max_change = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                const double old = theta(j);
                const double rho_j = grad(j) + col_norms(j) * old;
                const double updated = soft_threshold(rho_j, 0.5 * lambda) / col_norms(j);
                if (updated != old) {
                    grad -= XtX.col(j) * (updated - old);
                    theta(j) = updated;
                    max_change = std::max(max_change, std::abs(updated - old));
                }
            }
            // KKT violation on the LASSO problem itself.
            double viol = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                const double g = 2.0 * grad(j);
                if (theta(j) != 0.0) {
                    viol = std::max(viol, std::abs(g - lambda * (theta(j) > 0 ? 1.0 : -1.0)));
                } else {
                    viol = std::max(viol, std::max(0.0, std::abs(g) - lambda));
                }
            }
            if (viol <= cd_tol) break;
        }
    }

    Eigen::VectorXd fv = yv - ytilde + X * theta;
    L1Solution sol;
    sol.lambda = lambda;
    sol.f.assign(fv.data(), fv.data() + T);
    sol.iterations = sweeps;
    sol.converged = true;

    SecondDifference diff(static_cast<std::size_t>(T));
    PentadiagonalFactor gram_dd = factor_gram_dd(static_cast<std::size_t>(T));
    auto nu = dual_from_residual(diff, gram_dd, y, sol.f);
    const double scale = input_scale(y);
    sol.kkt_residual = measure_kkt(diff, y, sol.f, nu, lambda, 1e-8 * scale).residual;
    finish_solution(sol, y, diff);
    return sol;
}

double lasso_event_statistic(std::span<const double> y, std::span<const double> f_star) {
    if (y.size() != f_star.size()) {
        throw ValidationError("lasso_event_statistic: length mismatch");
    }
    if (y.size() < 3) throw ValidationError("lasso_event_statistic: need at least 3 points");
    const auto T = static_cast<Eigen::Index>(y.size());
    Eigen::VectorXd u(T);
    for (Eigen::Index i = 0; i < T; ++i) {
        u(i) = y[static_cast<std::size_t>(i)] - f_star[static_cast<std::size_t>(i)];
    }
    CurvatureReduction parts = build_curvature_reduction(y.size());
    return 2.5 * (u.transpose() * parts.design).cwiseAbs().maxCoeff();
}

double l1_lambda_max(std::span<const double> y) {
    check_input(y, 0.0);
    SecondDifference diff(y.size());
    PentadiagonalFactor gram_dd = factor_gram_dd(y.size());
    auto dy = diff.apply(y);
    for (double& v : dy) v *= 2.0;
    auto nu = gram_dd.solve(dy);
    return max_abs(nu);
}

KinkSet extract_kinks(std::span<const double> f, double eta) {
    if (f.size() < 3) throw ValidationError("extract_kinks: need at least 3 points");
    if (!(eta >= 0.0)) throw ValidationError("extract_kinks: eta must be nonnegative");
    KinkSet kinks;
    kinks.eta = eta;
    for (std::size_t t = 1; t + 1 < f.size(); ++t) {
        if (std::abs(curvature_at(f, t)) > eta) kinks.indices.push_back(t);
    }
    return kinks;
}

}  // namespace kinkfilter
