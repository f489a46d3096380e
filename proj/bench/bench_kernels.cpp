// Serial reference vs OpenMP kernels.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "groundpoint/kernels.hpp"

namespace {

using gp::kernels::Exec;

gp::Mat random_mat(Eigen::Index r, Eigen::Index c, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    gp::Mat m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k)
        m.data()[k] = n(rng);
    return m;
}

void BM_RotatedScores(benchmark::State& state, Exec exec) {
    const int I = static_cast<int>(state.range(0));
    const int M = 512;
    const gp::Mat keys = random_mat(M, I, 1);
    const gp::Vec q = random_mat(M, 1, 2).col(0);
    const gp::RotaryTable table(M, I);
    for (auto _ : state)
        benchmark::DoNotOptimize(gp::kernels::rotated_scores(keys, q, &table, 1.0 / std::sqrt(M), exec));
    state.SetItemsProcessed(state.iterations() * I);
}

void BM_CodecScan(benchmark::State& state, Exec exec) {
    const int side = static_cast<int>(state.range(0));
    const gp::GridSpec grid = gp::build_grid(side, side, 4);
    for (auto _ : state)
        benchmark::DoNotOptimize(gp::kernels::codec_scan(grid, exec));
    state.SetItemsProcessed(state.iterations() * side * side * 4);
}

void BM_OrderedSum(benchmark::State& state, Exec exec) {
    const int n = static_cast<int>(state.range(0));
    const int parts = 16;
    std::vector<gp::Mat> bufs;
    for (int k = 0; k < parts; ++k)
        bufs.push_back(random_mat(n, 1, 10 + k));
    std::vector<std::span<const double>> in;
    for (const auto& b : bufs)
        in.emplace_back(b.data(), static_cast<size_t>(b.size()));
    std::vector<double> out(static_cast<size_t>(n));
    for (auto _ : state) {
        gp::kernels::ordered_sum(in, out, exec);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * n * parts);
}

} // namespace

BENCHMARK_CAPTURE(BM_RotatedScores, serial, Exec::serial)->Arg(64)->Arg(1024);
BENCHMARK_CAPTURE(BM_RotatedScores, omp, Exec::parallel)->Arg(64)->Arg(1024);
BENCHMARK_CAPTURE(BM_CodecScan, serial, Exec::serial)->Arg(56)->Arg(112);
BENCHMARK_CAPTURE(BM_CodecScan, omp, Exec::parallel)->Arg(56)->Arg(112);
BENCHMARK_CAPTURE(BM_OrderedSum, serial, Exec::serial)->Arg(4096)->Arg(262144);
BENCHMARK_CAPTURE(BM_OrderedSum, omp, Exec::parallel)->Arg(4096)->Arg(262144);

BENCHMARK_MAIN();
