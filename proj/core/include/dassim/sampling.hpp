#pragma once

#include <functional>

#include "dassim/rng.hpp"
#include "dassim/types.hpp"

namespace dassim::sampling {

// N particles as rows with nonnegative weights summing to 1 within 1e-12.
class WeightedEnsemble {
 public:
  WeightedEnsemble(Matrix particles, Vector weights);
  static WeightedEnsemble uniform(Matrix particles);

  int size() const { return static_cast<int>(x_.rows()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  const Matrix& particles() const { return x_; }
  const Vector& weights() const { return w_; }

  // Weighted mean sum_n w_n x_n.
  Vector mean() const { return x_.transpose() * w_; }

 private:
  Matrix x_;
  Vector w_;
};

// Deterministic left-to-right pairwise reduction; shared by the estimators
// so results do not depend on accumulation order.
double pairwise_sum(const double* xs, long n);

// Plain Monte Carlo mean of f over sample rows.
double monte_carlo_estimate(const std::function<double(const Vector&)>& f,
                            const Matrix& samples);

struct IsEstimate {
  double estimate = 0.0;
  Vector weights;       // self-normalized
  double zeta_hat = 0.0;  // N sum(g^2) / (sum g)^2
};

// Self-normalized importance estimate of E_pi f from proposal samples with
// unnormalized density ratio g >= 0. Errors if every weight vanishes.
IsEstimate importance_estimate(const std::function<double(const Vector&)>& f,
                               const Matrix& samples,
                               const std::function<double(const Vector&)>& g);

// Multinomial resampling: particle m owns [alpha_{m-1}, alpha_m) where alpha
// is the compensated cumulative weight sequence with alpha_N forced to 1.
// One output row per uniform, all uniforms in [0, 1).
Matrix resample(const WeightedEnsemble& ens, const Vector& uniforms);

// Stratified variance-reduction option: entry n is (n + U_n)/N.
Vector stratified_uniforms(int n, RngStream& rng);

}  // namespace dassim::sampling
