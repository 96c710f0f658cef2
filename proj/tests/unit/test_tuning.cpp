#include <doctest.h>

#include <cmath>
#include <vector>

#include "kinkfilter/errors.hpp"
#include "kinkfilter/tuning.hpp"
#include "support/oracles.hpp"

using namespace kinkfilter;

namespace {

std::vector<double> noisy_one_kink(std::size_t T, unsigned seed, double sigma) {
    std::vector<std::size_t> kinks{T / 2};
    std::vector<double> bends{-0.9};
    auto y = oracles::hinge_signal(T, 0.1, 0.06, kinks, bends);
    auto noise = oracles::gaussian_vector(T, seed, sigma);
    for (std::size_t i = 0; i < T; ++i) y[i] += noise[i];
    return y;
}

}  // namespace

TEST_CASE("noiseless data is interpolated by the true model class") {
    std::vector<std::size_t> kinks{12};
    std::vector<double> bends{0.8};
    auto y = oracles::hinge_signal(25, -0.3, 0.05, kinks, bends);
    TuningGrid grid;
    grid.kappas = {1};
    grid.lambdas = {1e-6, 1e-4};
    TuningResult result = loocv_sparse_hp(y, grid);
    for (const auto& cell : result.cells) {
        CHECK(cell.diagnostics.valid);
        CHECK(cell.score <= 1e-10);
    }
    CHECK(result.selected_kappa == 1);
}

TEST_CASE("cross-validation scores are independent of the worker count") {
    auto y = noisy_one_kink(24, 19, 0.15);
    TuningGrid grid;
    grid.kappas = {1, 2};
    grid.lambdas = {0.5, 2.0};
    LoocvOptions serial;
    serial.threads = 1;
    LoocvOptions parallel;
    parallel.threads = 3;
    TuningResult a = loocv_sparse_hp(y, grid, serial);
    TuningResult b = loocv_sparse_hp(y, grid, parallel);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t c = 0; c < a.cells.size(); ++c) {
        CHECK(a.cells[c].score == b.cells[c].score);  // bitwise
    }
    CHECK(a.selected_kappa == b.selected_kappa);
    CHECK(a.selected_lambda == b.selected_lambda);
}

TEST_CASE("selection ties prefer smaller kappa then smaller lambda") {
    // With a pure straight line every (kappa, lambda) interpolates equally
    // well (score ~ 0), so the tie rule decides.
    std::vector<double> y(20);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.4 - 0.01 * static_cast<double>(i);
    TuningGrid grid;
    grid.kappas = {2, 3};
    grid.lambdas = {1.0, 2.0};
    TuningResult result = loocv_sparse_hp(y, grid);
    CHECK(result.selected_kappa == 2);
    CHECK(result.selected_lambda == 1.0);
}

TEST_CASE("grid validation") {
    TuningGrid empty;
    empty.kappas.clear();
    CHECK_THROWS_AS(empty.validate(), ValidationError);
    TuningGrid negative;
    negative.lambdas = {-1.0};
    CHECK_THROWS_AS(negative.validate(), ValidationError);
    std::vector<double> tiny{1.0, 2.0, 3.0};
    TuningGrid ok;
    CHECK_THROWS_AS(loocv_sparse_hp(tiny, ok), ValidationError);  // T < 10
}

TEST_CASE("fidelity matching hits the target for every comparator") {
    auto y = noisy_one_kink(40, 7, 0.12);
    SparseHpSolution reference = solve_bnb(SparseHpProblem::from_data(y, 1, 1.0));
    const double target = reference.fidelity;
    for (ComparatorFilter filter :
         {ComparatorFilter::Hp, ComparatorFilter::L1, ComparatorFilter::SqrtL1}) {
        MatchedFit fit = match_fidelity(y, target, filter, default_bracket(y, filter));
        CHECK(std::abs(fit.fidelity - target) <= 1e-6 * std::max(1.0, target));
        CHECK(fit.lambda >= 0.0);
    }
}

TEST_CASE("a zero target selects lambda = 0 for the exact-fit filter") {
    auto y = noisy_one_kink(30, 3, 0.1);
    MatchedFit fit =
        match_fidelity(y, 0.0, ComparatorFilter::L1, default_bracket(y, ComparatorFilter::L1));
    CHECK(fit.lambda == 0.0);
    CHECK(fit.fidelity == 0.0);
}

TEST_CASE("targets outside the bracket's range are rejected with the endpoints") {
    auto y = noisy_one_kink(30, 29, 0.1);
    FidelityBracket bracket{0.0, 1e-4};
    CHECK_THROWS_WITH_AS(match_fidelity(y, 1e6, ComparatorFilter::Hp, bracket),
                         doctest::Contains("outside attainable range"), ValidationError);
    FidelityBracket bad{2.0, 1.0};
    CHECK_THROWS_AS(match_fidelity(y, 1.0, ComparatorFilter::Hp, bad), ValidationError);
}

TEST_CASE("the surface serializes as kappa,lambda,score rows") {
    auto y = noisy_one_kink(20, 5, 0.2);
    TuningGrid grid;
    grid.kappas = {1};
    grid.lambdas = {1.0, 2.0};
    TuningResult result = loocv_sparse_hp(y, grid);
    const std::string text = tuning_surface_csv(result);
    CHECK(text.find("kappa,lambda,score\n") == 0);
    CHECK(text.find("1,1,") != std::string::npos);
    CHECK(text.find("1,2,") != std::string::npos);
}
