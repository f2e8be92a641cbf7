// Microbenchmarks for the hot paths: Kalman recursions, resampling, ensemble
// analyses (gain vs subspace form), particle steps, and EKI updates.

#include <benchmark/benchmark.h>

#include <cmath>

#include "dassim/core_ops.hpp"
#include "dassim/ensemble.hpp"
#include "dassim/inversion.hpp"
#include "dassim/kalman.hpp"
#include "dassim/models.hpp"
#include "dassim/particle.hpp"
#include "dassim/rng.hpp"
#include "dassim/sampling.hpp"

namespace {

using namespace dassim;

Matrix random_matrix(int rows, int cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

SpdMatrix random_spd(int d, RngStream& rng) {
  Matrix a = random_matrix(d, d, rng);
  return SpdMatrix(Matrix(a * a.transpose() / d + Matrix::Identity(d, d)));
}

// Random stable linear state-space model of the requested dimensions.
kalman::LinearModel random_model(int d, int k, RngStream& rng) {
  Matrix m = random_matrix(d, d, rng);
  m *= 0.9 / m.norm();
  return kalman::LinearModel(m, random_matrix(k, d, rng), random_spd(d, rng),
                             random_spd(k, rng),
                             Gaussian(Vector::Zero(d), random_spd(d, rng)));
}

void bm_kalman_filter(benchmark::State& state) {
  const int j_steps = static_cast<int>(state.range(0));
  RngStream rng(7, 0);
  kalman::LinearModel lm = random_model(4, 2, rng);
  models::SyntheticRun sim = models::simulate(lm, j_steps, rng);
  for (auto _ : state) {
    kalman::FilterTrace ft = kalman::kalman_filter(lm, sim.data);
    benchmark::DoNotOptimize(ft.updated.back().mean);
  }
  state.SetItemsProcessed(state.iterations() * j_steps);
}
BENCHMARK(bm_kalman_filter)->Arg(16)->Arg(64)->Arg(256);

void bm_kalman_smoother(benchmark::State& state) {
  const int j_steps = static_cast<int>(state.range(0));
  RngStream rng(7, 1);
  kalman::LinearModel lm = random_model(4, 2, rng);
  models::SyntheticRun sim = models::simulate(lm, j_steps, rng);
  for (auto _ : state) {
    kalman::SmootherResult sm = kalman::kalman_smoother(lm, sim.data);
    benchmark::DoNotOptimize(sm.means);
  }
  state.SetItemsProcessed(state.iterations() * j_steps);
}
BENCHMARK(bm_kalman_smoother)->Arg(16)->Arg(64)->Arg(256);

void bm_resample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  RngStream rng(7, 2);
  Matrix particles = random_matrix(n, 4, rng);
  Vector logw = random_matrix(n, 1, rng).col(0);
  Vector w = (logw.array() - logw.maxCoeff()).exp();
  w /= w.sum();
  sampling::WeightedEnsemble ens(particles, w);
  std::uint64_t i = 0;
  for (auto _ : state) {
    RngStream r = rng.at_step(i++);
    Vector u = sampling::stratified_uniforms(n, r);
    benchmark::DoNotOptimize(sampling::resample(ens, u));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_resample)->Arg(256)->Arg(4096)->Arg(65536);

// Gain-form analysis solves in observation space; subspace-form works in the
// N-dimensional anomaly space. The pair shows the crossover in state dim.
void bm_enkf_analysis_gain(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int n = 32, k = 8;
  RngStream rng(7, 3);
  Matrix h = random_matrix(k, d, rng);
  SpdMatrix gamma = random_spd(k, rng);
  Matrix members = random_matrix(n, d, rng);
  Vector y = random_matrix(k, 1, rng).col(0);
  std::uint64_t i = 0;
  for (auto _ : state) {
    RngStream r = rng.at_step(i++);
    benchmark::DoNotOptimize(
        ensemble::enkf_analysis(members, h, gamma, y, r));
  }
}
BENCHMARK(bm_enkf_analysis_gain)->Arg(8)->Arg(64)->Arg(512);

void bm_enkf_analysis_subspace(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int n = 32, k = 8;
  RngStream rng(7, 3);
  Matrix h = random_matrix(k, d, rng);
  SpdMatrix gamma = random_spd(k, rng);
  Matrix members = random_matrix(n, d, rng);
  Vector y = random_matrix(k, 1, rng).col(0);
  std::uint64_t i = 0;
  for (auto _ : state) {
    RngStream r = rng.at_step(i++);
    benchmark::DoNotOptimize(
        ensemble::enkf_analysis_subspace(members, h, gamma, y, r));
  }
}
BENCHMARK(bm_enkf_analysis_subspace)->Arg(8)->Arg(64)->Arg(512);

void bm_bpf_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  models::BenchmarkProblem bp = models::make_benchmark("vector-lg-d4k2");
  RngStream rng(7, 4);
  sampling::WeightedEnsemble ens = sampling::WeightedEnsemble::uniform(
      sample_gaussian(bp.nonlinear->init, n, rng));
  Vector y = random_matrix(2, 1, rng).col(0);
  std::uint64_t i = 0;
  for (auto _ : state) {
    RngStream r = rng.at_step(i++);
    benchmark::DoNotOptimize(
        particle::bpf_step(ens, *bp.nonlinear, y, r).posterior);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_bpf_step)->Arg(256)->Arg(4096)->Arg(65536);

void bm_opf_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  models::BenchmarkProblem bp = models::make_benchmark("vector-lg-d4k2");
  particle::OpfKernel kernel = particle::opf_kernel(
      bp.nonlinear->Sigma, bp.nonlinear->H, bp.nonlinear->Gamma);
  RngStream rng(7, 5);
  sampling::WeightedEnsemble ens = sampling::WeightedEnsemble::uniform(
      sample_gaussian(bp.nonlinear->init, n, rng));
  Vector y = random_matrix(2, 1, rng).col(0);
  std::uint64_t i = 0;
  for (auto _ : state) {
    RngStream r = rng.at_step(i++);
    benchmark::DoNotOptimize(
        particle::opf_step(ens, *bp.nonlinear, y, kernel, r).posterior);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_opf_step)->Arg(256)->Arg(4096)->Arg(65536);

void bm_eki_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 8, k = 4;
  RngStream rng(7, 6);
  Matrix a = random_matrix(k, d, rng);
  inversion::ForwardMap forward = [a](const Vector& u) {
    return Vector(a * u);
  };
  SpdMatrix gamma = random_spd(k, rng);
  Vector y = random_matrix(k, 1, rng).col(0);
  inversion::EkiState st{random_matrix(n, d, rng), 0};
  std::uint64_t i = 0;
  for (auto _ : state) {
    RngStream r = rng.at_step(i++);
    benchmark::DoNotOptimize(
        inversion::eki_step(st, forward, gamma, y, true, r).members);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_eki_step)->Arg(16)->Arg(128)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
