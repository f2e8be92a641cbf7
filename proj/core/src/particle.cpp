#include "dassim/particle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "dassim/core_ops.hpp"
#include "dassim/error.hpp"

namespace dassim::particle {

namespace {

void require_uniform(const WeightedEnsemble& ens, const char* op) {
  const double even = 1.0 / ens.size();
  if ((ens.weights().array() - even).abs().maxCoeff() > 1e-9)
    throw std::invalid_argument(std::string(op) +
                                " requires a uniform-weighted input ensemble");
}

// Log-sum-exp normalization. Collapse is declared only when every log-weight
// is -inf after shifting, i.e. when the maximum itself is -inf.
Vector normalized_weights(const Vector& log_w) {
  double max_lw = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < log_w.size(); ++i) {
    if (std::isnan(log_w(i)))
      throw NumericalError("non-finite particle log-weight");
    max_lw = std::max(max_lw, log_w(i));
  }
  if (!std::isfinite(max_lw))
    throw NumericalError("weight collapse: max log-weight is " +
                         std::to_string(max_lw));
  Vector w = (log_w.array() - max_lw).exp();
  return w / w.sum();
}

Vector multinomial_uniforms(int n, RngStream rng) {
  Vector us(n);
  for (int i = 0; i < n; ++i) us(i) = rng.uniform();
  return us;
}

void check_kernel(const NonlinearModel& model, const OpfKernel& kernel,
                  const WeightedEnsemble& ens, const Vector& y) {
  if (ens.dim() != model.state_dim() || y.size() != model.obs_dim())
    throw std::invalid_argument("ensemble or data dimension mismatch");
  if (kernel.K.rows() != model.state_dim() ||
      kernel.K.cols() != model.obs_dim() ||
      kernel.C.dim() != model.state_dim() || kernel.S.dim() != model.obs_dim())
    throw std::invalid_argument("proposal kernel does not match the model");
}

}  // namespace

double effective_sample_size(const Vector& weights) {
  return 1.0 / weights.squaredNorm();
}

StepResult bpf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                    const std::function<Vector(const Vector&)>& observe,
                    const Vector& y, const RngStream& rng) {
  require_uniform(ens, "bpf_step");
  if (!observe) throw std::invalid_argument("observation function must be set");
  if (ens.dim() != model.state_dim())
    throw std::invalid_argument("ensemble dimension does not match the model");
  if (y.size() != model.Gamma.dim())
    throw std::invalid_argument("datum does not match the data noise");
  const int n = ens.size();
  const int d = ens.dim();
  const Matrix chol = model.Sigma.chol_lower();
  Matrix propagated(n, d);
  Vector log_w(n);
  for (int i = 0; i < n; ++i) {
    Vector vhat = model.psi(ens.particles().row(i).transpose()) +
                  chol * rng.fork(i).normals(d);
    propagated.row(i) = vhat.transpose();
    Vector hv = observe(vhat);
    if (hv.size() != y.size())
      throw std::invalid_argument(
          "observation function output has wrong dimension");
    log_w(i) = -0.5 * weighted_sq_norm(model.Gamma, Vector(y - hv));
  }
  WeightedEnsemble weighted(std::move(propagated), normalized_weights(log_w));
  Matrix resampled =
      sampling::resample(weighted, multinomial_uniforms(n, rng.fork(n)));
  return {WeightedEnsemble::uniform(std::move(resampled)),
          std::move(weighted)};
}

StepResult bpf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                    const Vector& y, const RngStream& rng) {
  const Matrix& h = model.H;
  return bpf_step(
      ens, model, [&h](const Vector& v) { return Vector(h * v); }, y, rng);
}

OpfKernel opf_kernel(const SpdMatrix& sigma, const Matrix& h,
                     const SpdMatrix& gamma) {
  const int d = sigma.dim();
  const int k = gamma.dim();
  if (h.rows() != k || h.cols() != d)
    throw std::invalid_argument("observation matrix shape mismatch");
  Matrix s_raw = h * sigma.matrix() * h.transpose() + gamma.matrix();
  SpdMatrix s{Matrix(0.5 * (s_raw + s_raw.transpose()))};
  Matrix gain = s.solve(Matrix(h * sigma.matrix())).transpose();
  Matrix c_raw = (Matrix::Identity(d, d) - gain * h) * sigma.matrix();
  SpdMatrix c{Matrix(0.5 * (c_raw + c_raw.transpose()))};
  Matrix precision =
      h.transpose() * gamma.solve(h) + sigma.solve(Matrix(Matrix::Identity(d, d)));
  const double residual =
      (precision * c.matrix() - Matrix::Identity(d, d)).norm();
  if (residual > 1e-10 * (1.0 + precision.norm() * c.matrix().norm()))
    throw NumericalError(
        "optimal-proposal covariance fails its precision-form cross-check");
  return {std::move(gain), std::move(c), std::move(s)};
}

StepResult opf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                    const Vector& y, const OpfKernel& kernel,
                    const RngStream& rng) {
  require_uniform(ens, "opf_step");
  check_kernel(model, kernel, ens, y);
  const int n = ens.size();
  const int d = ens.dim();
  Matrix psi_x(n, d);
  Vector log_w(n);
  for (int i = 0; i < n; ++i) {
    Vector pv = model.psi(ens.particles().row(i).transpose());
    psi_x.row(i) = pv.transpose();
    log_w(i) = -0.5 * weighted_sq_norm(kernel.S, Vector(y - model.H * pv));
  }
  // Weights are fixed here; only now is propagation noise drawn.
  Vector w = normalized_weights(log_w);
  const Matrix chol_c = kernel.C.chol_lower();
  Matrix propagated(n, d);
  for (int i = 0; i < n; ++i) {
    Vector pv = psi_x.row(i).transpose();
    propagated.row(i) = (pv + kernel.K * (y - model.H * pv) +
                         chol_c * rng.fork(i).normals(d))
                            .transpose();
  }
  WeightedEnsemble weighted(std::move(propagated), std::move(w));
  Matrix resampled =
      sampling::resample(weighted, multinomial_uniforms(n, rng.fork(n)));
  return {WeightedEnsemble::uniform(std::move(resampled)),
          std::move(weighted)};
}

StepResult gopf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                     const Vector& y, const OpfKernel& kernel,
                     const RngStream& rng) {
  require_uniform(ens, "gopf_step");
  check_kernel(model, kernel, ens, y);
  const int n = ens.size();
  const int d = ens.dim();
  Vector log_w(n);
  for (int i = 0; i < n; ++i) {
    Vector pv = model.psi(ens.particles().row(i).transpose());
    log_w(i) = -0.5 * weighted_sq_norm(kernel.S, Vector(y - model.H * pv));
  }
  WeightedEnsemble weighted(ens.particles(), normalized_weights(log_w));
  Matrix survivors =
      sampling::resample(weighted, multinomial_uniforms(n, rng.fork(n)));
  const Matrix chol_c = kernel.C.chol_lower();
  Matrix propagated(n, d);
  for (int i = 0; i < n; ++i) {
    Vector pv = model.psi(survivors.row(i).transpose());
    propagated.row(i) = (pv + kernel.K * (y - model.H * pv) +
                         chol_c * rng.fork(i).normals(d))
                            .transpose();
  }
  return {WeightedEnsemble::uniform(std::move(propagated)),
          std::move(weighted)};
}

}  // namespace dassim::particle
