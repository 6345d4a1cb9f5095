// Serial reference kernels against their OpenMP versions.
// Run with OMP_NUM_THREADS set to the core count to see the speedup.

#include "mmpp/es_single.hpp"
#include "mmpp/fpca.hpp"
#include "mmpp/kernel_stats.hpp"
#include "mmpp/simgen.hpp"

#include <benchmark/benchmark.h>

using namespace mmpp;

namespace {

const LabeledDataset& single_data() {
    static const LabeledDataset ds = [] {
        SimConfig sc;
        sc.seed = 1;
        return simulate_dataset(sc);
    }();
    return ds;
}

const LabeledDataset& multi_data() {
    static const LabeledDataset ds = [] {
        SimConfig sc;
        sc.seed = 1;
        sc.per_cluster = 25;
        sc.slots = 20;
        return simulate_dataset(sc);
    }();
    return ds;
}

const KernelConfig kKernel{KernelFamily::epanechnikov, 0.2, 2.0};

void BM_stats_serial(benchmark::State& state) {
    const auto rows = account_rows(single_data().data);
    const EvalGrid grid(2.0, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(serial::precompute_stats(rows, grid, kKernel));
}

void BM_stats_parallel(benchmark::State& state) {
    const auto rows = account_rows(single_data().data);
    const EvalGrid grid(2.0, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(precompute_stats(rows, grid, kKernel));
}

void BM_four_serial(benchmark::State& state) {
    const EvalGrid grid(2.0, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(serial::four_estimators(multi_data().data, grid, kKernel));
}

void BM_four_parallel(benchmark::State& state) {
    const EvalGrid grid(2.0, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(four_estimators(multi_data().data, grid, kKernel));
}

struct LoglikSetup {
    std::vector<MarkSplitSequence> rows;
    std::vector<AccountQuadrature> schemes;
    std::vector<ClusterModel> clusters;
    Eigen::MatrixXd draws;
    EvalGrid grid{2.0, 51};

    explicit LoglikSetup(int samples) {
        rows = account_rows(single_data().data);
        for (const auto& row : rows) schemes.push_back(build_quadrature(row, grid));
        const auto stats = precompute_stats(rows, grid, kKernel);
        PosteriorMatrix w(rows.size(), 2);
        for (int i = 0; i < w.rows(); ++i) w.row(i) << (i < w.rows() / 2 ? 0.9 : 0.1), (i < w.rows() / 2 ? 0.1 : 0.9);
        const auto params = s_step(w, stats);
        for (int c = 0; c < 2; ++c) clusters.push_back(build_cluster_model(params, c, grid, 0.95));
        draws = standard_normal_draws(2 * grid.size(), samples, 3);
    }
};

void BM_loglik_serial(benchmark::State& state) {
    const LoglikSetup s(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(serial::cluster_loglik(s.schemes, s.clusters, s.draws, s.grid));
}

void BM_loglik_parallel(benchmark::State& state) {
    const LoglikSetup s(static_cast<int>(state.range(0)));
    const QuadratureTable table(s.rows, s.grid);
    for (auto _ : state) benchmark::DoNotOptimize(cluster_loglik(table, s.clusters, s.draws));
}

} // namespace

BENCHMARK(BM_stats_serial)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_stats_parallel)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_four_serial)->Arg(51)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_four_parallel)->Arg(51)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_loglik_serial)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_loglik_parallel)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
