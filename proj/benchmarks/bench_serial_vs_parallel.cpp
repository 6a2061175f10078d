// Serial reference vs OpenMP kernels on representative workloads.
// Run: ./benchmarks/sock_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include "sock/diffusion_implicit.hpp"
#include "sock/drift.hpp"
#include "sock/evaluate.hpp"
#include "sock/kernels.hpp"
#include "sock/psd_optim.hpp"
#include "sock/reference.hpp"
#include "sock/rng.hpp"
#include "sock/simulate.hpp"

namespace {

using namespace sock;

Dataset bench_dataset(int bundles, int points, int realizations, int dim) {
  GenerateConfig cfg;
  cfg.preset = dim == 1 ? "gbm" : "dense_matrix";
  cfg.train = bundles;
  cfg.val = 1;
  cfg.test = 1;
  cfg.n_points = points;
  cfg.tau = 1e-3;
  cfg.seed = 99;
  Dataset ds = generate_dataset(cfg).train;
  if (realizations > 1) {
    for (auto& b : ds.bundles) {
      while (static_cast<int>(b.values.size()) < realizations) {
        Eigen::MatrixXd copy = b.values.front();
        copy.bottomRows(copy.rows() - 1).array() += 0.01 * b.values.size();
        b.values.push_back(copy);
      }
    }
  }
  return ds;
}

void BM_drift_gram_serial(benchmark::State& state) {
  const Dataset ds = bench_dataset(4, 40, 2, 1);
  const KernelSpec k = gaussian_kernel(0.8);
  for (auto _ : state) benchmark::DoNotOptimize(reference::build_drift_gram(ds, k));
}
BENCHMARK(BM_drift_gram_serial)->Unit(benchmark::kMillisecond);

void BM_drift_gram_parallel(benchmark::State& state) {
  const Dataset ds = bench_dataset(4, 40, 2, 1);
  const KernelSpec k = gaussian_kernel(0.8);
  for (auto _ : state) benchmark::DoNotOptimize(build_drift_gram(ds, k));
}
BENCHMARK(BM_drift_gram_parallel)->Unit(benchmark::kMillisecond);

void BM_gram_serial(benchmark::State& state) {
  rng::Stream rng(1);
  Eigen::MatrixXd pts(600, 3);
  for (int i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  const KernelSpec k = gaussian_kernel(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(reference::gram(k, pts));
}
BENCHMARK(BM_gram_serial)->Unit(benchmark::kMillisecond);

void BM_gram_parallel(benchmark::State& state) {
  rng::Stream rng(1);
  Eigen::MatrixXd pts(600, 3);
  for (int i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  const KernelSpec k = gaussian_kernel(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(gram(k, pts));
}
BENCHMARK(BM_gram_parallel)->Unit(benchmark::kMillisecond);

MatList bench_occ(int n, int m) {
  rng::Stream rng(7);
  MatList occ;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd b(m, m);
    for (int j = 0; j < b.size(); ++j) b.data()[j] = rng.normal();
    occ.push_back(b * b.transpose());
  }
  return occ;
}

MatList bench_weights(int n, int d) {
  rng::Stream rng(8);
  MatList w;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd m(d, d);
    for (int j = 0; j < m.size(); ++j) m.data()[j] = rng.normal();
    w.push_back(m);
  }
  return w;
}

void BM_block_sum_serial(benchmark::State& state) {
  const MatList occ = bench_occ(400, 100);
  const MatList w = bench_weights(400, 1);
  for (auto _ : state) benchmark::DoNotOptimize(reference::block_weighted_sum(occ, w));
}
BENCHMARK(BM_block_sum_serial)->Unit(benchmark::kMillisecond);

void BM_block_sum_parallel(benchmark::State& state) {
  const MatList occ = bench_occ(400, 100);
  const MatList w = bench_weights(400, 1);
  for (auto _ : state) benchmark::DoNotOptimize(block_weighted_sum(occ, w));
}
BENCHMARK(BM_block_sum_parallel)->Unit(benchmark::kMillisecond);

void BM_occupation_serial(benchmark::State& state) {
  const Dataset ds = bench_dataset(8, 40, 1, 1);
  const KernelSpec features = fourier_kernel(1.0, 100, 5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(reference::build_occupation(ds, features));
}
BENCHMARK(BM_occupation_serial)->Unit(benchmark::kMillisecond);

void BM_occupation_parallel(benchmark::State& state) {
  const Dataset ds = bench_dataset(8, 40, 1, 1);
  const KernelSpec features = fourier_kernel(1.0, 100, 5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_occupation(ds, features));
}
BENCHMARK(BM_occupation_parallel)->Unit(benchmark::kMillisecond);

void BM_drift_eval_reference(benchmark::State& state) {
  const Dataset ds = bench_dataset(8, 40, 1, 1);
  const DriftModel model = fit_drift(ds, gaussian_kernel(0.8), 1e-5);
  rng::Stream rng(2);
  Eigen::MatrixXd pts(200, 1);
  for (int i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(reference::eval_drift_batch(model, pts));
}
BENCHMARK(BM_drift_eval_reference)->Unit(benchmark::kMillisecond);

void BM_drift_eval_parallel(benchmark::State& state) {
  const Dataset ds = bench_dataset(8, 40, 1, 1);
  const DriftModel model = fit_drift(ds, gaussian_kernel(0.8), 1e-5);
  rng::Stream rng(2);
  Eigen::MatrixXd pts(200, 1);
  for (int i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(eval_drift_batch(model, pts));
}
BENCHMARK(BM_drift_eval_parallel)->Unit(benchmark::kMillisecond);

std::vector<Eigen::MatrixXd> bench_trajs(int count, int points, std::uint64_t seed) {
  std::vector<Eigen::MatrixXd> out;
  rng::Stream rng(seed);
  for (int i = 0; i < count; ++i) {
    Eigen::MatrixXd t(points, 1);
    double x = 1.0 + 0.1 * rng.normal();
    for (int j = 0; j < points; ++j) {
      t(j, 0) = x;
      x += 0.05 * rng.normal();
    }
    out.push_back(t);
  }
  return out;
}

void BM_mmd_serial(benchmark::State& state) {
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(51, 0, 1);
  const auto a = bench_trajs(120, 51, 1), b = bench_trajs(40, 51, 2);
  for (auto _ : state) benchmark::DoNotOptimize(reference::mmd_vstat(times, a, b, 0.5));
}
BENCHMARK(BM_mmd_serial)->Unit(benchmark::kMillisecond);

void BM_mmd_parallel(benchmark::State& state) {
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(51, 0, 1);
  const auto a = bench_trajs(120, 51, 1), b = bench_trajs(40, 51, 2);
  for (auto _ : state) benchmark::DoNotOptimize(mmd_vstat(times, a, b, 0.5));
}
BENCHMARK(BM_mmd_parallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
