#include "dassim/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dassim/error.hpp"

namespace dassim::sampling {

namespace {
constexpr double kMassTol = 1e-12;
}

WeightedEnsemble::WeightedEnsemble(Matrix particles, Vector weights)
    : x_(std::move(particles)), w_(std::move(weights)) {
  if (x_.rows() < 1) {
    throw std::invalid_argument("WeightedEnsemble: needs at least 1 particle");
  }
  if (w_.size() != x_.rows()) {
    throw std::invalid_argument("WeightedEnsemble: weight count mismatch");
  }
  if (w_.minCoeff() < 0.0) {
    throw std::invalid_argument("WeightedEnsemble: negative weight");
  }
  if (std::abs(w_.sum() - 1.0) > kMassTol) {
    throw std::invalid_argument("WeightedEnsemble: weights must sum to 1");
  }
}

WeightedEnsemble WeightedEnsemble::uniform(Matrix particles) {
  const auto n = particles.rows();
  if (n < 1) {
    throw std::invalid_argument("WeightedEnsemble: needs at least 1 particle");
  }
  return WeightedEnsemble(std::move(particles),
                          Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

double pairwise_sum(const double* xs, long n) {
  if (n <= 8) {
    double s = 0.0;
    for (long i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  const long half = n / 2;
  return pairwise_sum(xs, half) + pairwise_sum(xs + half, n - half);
}

double monte_carlo_estimate(const std::function<double(const Vector&)>& f,
                            const Matrix& samples) {
  const long n = samples.rows();
  if (n < 1) {
    throw std::invalid_argument("monte_carlo_estimate: no samples");
  }
  std::vector<double> fx(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) fx[i] = f(samples.row(i).transpose());
  return pairwise_sum(fx.data(), n) / static_cast<double>(n);
}

IsEstimate importance_estimate(
    const std::function<double(const Vector&)>& f, const Matrix& samples,
    const std::function<double(const Vector&)>& g) {
  const long n = samples.rows();
  if (n < 1) {
    throw std::invalid_argument("importance_estimate: no samples");
  }
  std::vector<double> gv(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    gv[i] = g(samples.row(i).transpose());
    if (gv[i] < 0.0) {
      throw std::invalid_argument("importance_estimate: negative weight");
    }
  }
  const double s1 = pairwise_sum(gv.data(), n);
  if (!(s1 > 0.0)) {
    throw NumericalError(
        "importance_estimate: degenerate proposal, all weights are zero");
  }
  IsEstimate out;
  out.weights = Vector(n);
  std::vector<double> wf(static_cast<std::size_t>(n)),
      g2(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    out.weights[i] = gv[i] / s1;
    wf[i] = out.weights[i] * f(samples.row(i).transpose());
    g2[i] = gv[i] * gv[i];
  }
  out.estimate = pairwise_sum(wf.data(), n);
  out.zeta_hat =
      static_cast<double>(n) * pairwise_sum(g2.data(), n) / (s1 * s1);
  return out;
}

Matrix resample(const WeightedEnsemble& ens, const Vector& uniforms) {
  const int n = ens.size();
  const long r = uniforms.size();
  if (r < 1) {
    throw std::invalid_argument("resample: needs at least one uniform");
  }
  // Compensated cumulative weights; top endpoint forced to 1 so u -> 1 is
  // always covered.
  std::vector<double> alpha(static_cast<std::size_t>(n));
  double sum = 0.0, comp = 0.0;
  for (int m = 0; m < n; ++m) {
    const double y = ens.weights()[m] - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    alpha[static_cast<std::size_t>(m)] = sum;
  }
  alpha[static_cast<std::size_t>(n - 1)] = 1.0;

  Matrix out(r, ens.dim());
  for (long i = 0; i < r; ++i) {
    const double u = uniforms[i];
    if (!(u >= 0.0 && u < 1.0)) {
      throw std::invalid_argument("resample: uniforms must lie in [0, 1)");
    }
    const auto it = std::upper_bound(alpha.begin(), alpha.end(), u);
    const auto idx = static_cast<long>(it - alpha.begin());
    out.row(i) = ens.particles().row(idx);
  }
  return out;
}

Vector stratified_uniforms(int n, RngStream& rng) {
  if (n < 1) {
    throw std::invalid_argument("stratified_uniforms: n must be >= 1");
  }
  Vector us(n);
  for (int i = 0; i < n; ++i) {
    us[i] = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(n);
  }
  return us;
}

}  // namespace dassim::sampling
