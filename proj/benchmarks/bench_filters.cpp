#include <benchmark/benchmark.h>

#include <vector>

#include "kinkfilter/hp_filter.hpp"
#include "kinkfilter/l1_filter.hpp"
#include "kinkfilter/risk_lab.hpp"
#include "kinkfilter/sparse_hp.hpp"
#include "kinkfilter/tuning.hpp"

namespace {

kinkfilter::SyntheticData make_data(std::size_t T, std::size_t kinks, std::uint64_t seed) {
    kinkfilter::RandomSource rng(seed);
    kinkfilter::SyntheticSpec spec = kinkfilter::random_piecewise_spec(T, kinks, rng);
    spec.sigma = 0.25;
    spec.seed = seed;
    return kinkfilter::generate(spec);
}

void BM_hp_solve(benchmark::State& state) {
    auto data = make_data(static_cast<std::size_t>(state.range(0)), 2, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinkfilter::hp_solve(data.y, 30.0));
    }
}
BENCHMARK(BM_hp_solve)->Arg(90)->Arg(400)->Arg(2000);

void BM_l1_solve(benchmark::State& state) {
    auto data = make_data(static_cast<std::size_t>(state.range(0)), 2, 13);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinkfilter::l1_solve(data.y, 0.9));
    }
}
BENCHMARK(BM_l1_solve)->Arg(90)->Arg(200);

void BM_restricted_qp(benchmark::State& state) {
    auto data = make_data(90, 2, 17);
    std::vector<std::size_t> kinks{20, 41, 62};
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinkfilter::restricted_qp(data.y, kinks, 1.0));
    }
}
BENCHMARK(BM_restricted_qp);

void BM_solve_bnb(benchmark::State& state) {
    auto data = make_data(static_cast<std::size_t>(state.range(0)), 2, 19);
    auto problem = kinkfilter::SparseHpProblem::from_data(
        data.y, static_cast<std::size_t>(state.range(1)), 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinkfilter::solve_bnb(problem));
    }
}
BENCHMARK(BM_solve_bnb)->Args({60, 2})->Args({90, 4});

void BM_loocv_cell(benchmark::State& state) {
    auto data = make_data(90, 2, 23);
    kinkfilter::TuningGrid grid;
    grid.kappas = {2};
    grid.lambdas = {4.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinkfilter::loocv_sparse_hp(data.y, grid));
    }
}
BENCHMARK(BM_loocv_cell);

}  // namespace

BENCHMARK_MAIN();
