#include <benchmark/benchmark.h>

#include <cmath>

#include "dgpsi/dgp_si.hpp"
#include "dgpsi/ess.hpp"
#include "dgpsi/linked_gp.hpp"

using namespace dgpsi;

namespace {

Eigen::MatrixXd grid(int n) {
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = i / (n - 1.0);
  return X;
}

LayerArchitecture arch3() {
  LayerArchitecture a;
  for (const char* n : {"a", "b", "c"}) a.latent_nodes.push_back({n, KernelFamily::SquaredExponential});
  a.output_node = {"y", KernelFamily::SquaredExponential};
  return a;
}

void BM_ExpectK(benchmark::State& s) {
  double acc = 0.0, w = -1.0;
  for (auto _ : s) {
    acc += expect_k(KernelFamily::SquaredExponential, 0.8, 0.1, 0.2, w);
    w += 1e-6;
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_ExpectK);

void BM_ExpectKK(benchmark::State& s) {
  double acc = 0.0, w = -1.0;
  for (auto _ : s) {
    acc += expect_kk(KernelFamily::SquaredExponential, 0.8, 0.1, 0.2, w, 0.3);
    w += 1e-6;
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_ExpectKK);

void BM_FitGp(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const Eigen::MatrixXd X = grid(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = std::sin(6 * X(i, 0)) + 0.05 * std::cos(37.0 * i);
  for (auto _ : s) benchmark::DoNotOptimize(fit_gp(X, y, FitConfig{}));
}
BENCHMARK(BM_FitGp)->Arg(20)->Arg(60)->Arg(115)->Unit(benchmark::kMillisecond);

void BM_LinkPredict(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const Eigen::MatrixXd X = grid(n);
  Eigen::MatrixXd W(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    W.row(i) << std::sin(5 * X(i, 0)), std::cos(3 * X(i, 0)), X(i, 0);
    y[i] = std::tanh(W.row(i).sum());
  }
  const LinkedEmulator em = fit_sequential_lgp(X, W, BoolMatrix::Constant(n, 3, true), y,
                                               BoolVector::Constant(n, true), arch3(), FitConfig{});
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.37);
  for (auto _ : s) benchmark::DoNotOptimize(link_predict(em, x0));
}
BENCHMARK(BM_LinkPredict)->Arg(20)->Arg(60)->Arg(115)->Unit(benchmark::kMicrosecond);

void BM_EssSweep(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  SemData d;
  d.X = grid(n);
  d.latent.resize(n, 3);
  d.y.resize(n);
  d.observed = BoolMatrix::Constant(n, 3, true);
  for (int i = 0; i < n; ++i) {
    d.latent.row(i) << std::sin(5 * d.X(i, 0)), std::cos(3 * d.X(i, 0)), d.X(i, 0);
    d.y[i] = std::tanh(d.latent.row(i).sum());
    if (i % 5 == 2) d.observed(i, i % 3) = false;
  }
  const GPHyperparams h{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.2)}, 1.0, 1e-3};
  const GPHyperparams h2{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(3, 1.0)}, 1.0, 1e-3};
  LatentSampler sampler(d, {h, h, h}, h2);
  Rng rng(1);
  for (auto _ : s) sampler.sweep(rng);
}
BENCHMARK(BM_EssSweep)->Arg(20)->Arg(60)->Arg(115)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
