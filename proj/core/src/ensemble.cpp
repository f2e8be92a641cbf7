#include "dassim/ensemble.hpp"

#include <stdexcept>

#include "dassim/kalman.hpp"

namespace dassim::ensemble {
namespace {

void check_analysis_args(const Matrix& members, const Matrix& h,
                         const SpdMatrix& gamma, const Vector& y, int s) {
  if (members.rows() < 1)
    throw std::invalid_argument("ensemble must have at least one member");
  if (h.cols() != members.cols())
    throw std::invalid_argument("observation matrix has wrong state dimension");
  if (gamma.dim() != h.rows() || y.size() != h.rows())
    throw std::invalid_argument("data dimension mismatch in analysis");
  if (s != 0 && s != 1)
    throw std::invalid_argument("perturbed-observation flag s must be 0 or 1");
}

// Per-member data y + s * eta_n, eta_n ~ N(0, Gamma) from rng.fork(n). Both
// analysis forms call this with identical arguments so their randomness is
// shared draw for draw.
Matrix perturbed_data(const Vector& y, const SpdMatrix& gamma, long n_members,
                      const RngStream& rng, int s) {
  const long k = y.size();
  Matrix data(n_members, k);
  if (s == 0) {
    data.rowwise() = y.transpose();
    return data;
  }
  const Matrix& chol = gamma.chol_lower();
  for (long n = 0; n < n_members; ++n) {
    RngStream sub = rng.fork(static_cast<std::uint64_t>(n));
    data.row(n) = (y + chol * sub.normals(static_cast<int>(k))).transpose();
  }
  return data;
}

}  // namespace

EmpiricalMoments empirical_moments(const Matrix& members) {
  const long n = members.rows();
  if (n < 1)
    throw std::invalid_argument("ensemble must have at least one member");
  Vector mean = members.colwise().mean().transpose();
  Matrix centered = members.rowwise() - mean.transpose();
  Matrix cov =
      centered.transpose() * centered / static_cast<double>(n);
  return EmpiricalMoments{std::move(mean),
                          0.5 * (cov + cov.transpose())};
}

Gaussian exkf_step(const Gaussian& post, const NonlinearModel& model,
                   const Vector& y) {
  if (!model.has_jacobian())
    throw std::invalid_argument(
        "extended Kalman step requires an explicit jacobian_psi");
  if (post.dim() != model.state_dim())
    throw std::invalid_argument("state dimension mismatch");
  Vector m_hat = model.psi(post.mean);
  Matrix jac = model.jacobian_psi(post.mean);
  Matrix c_hat =
      jac * post.cov.matrix() * jac.transpose() + model.Sigma.matrix();
  Gaussian pred(std::move(m_hat), kalman::floored_covariance(std::move(c_hat)));
  return kalman::kf_update_gain(pred, model.H, model.Gamma, y).post;
}

Matrix enkf_predict(const Matrix& members, const NonlinearModel& model,
                    const RngStream& rng) {
  if (members.cols() != model.state_dim())
    throw std::invalid_argument("ensemble has wrong state dimension");
  const long n = members.rows();
  const int d = model.state_dim();
  const Matrix& chol = model.Sigma.chol_lower();
  Matrix out(n, d);
  for (long i = 0; i < n; ++i) {
    RngStream sub = rng.fork(static_cast<std::uint64_t>(i));
    out.row(i) = (model.psi(members.row(i).transpose()) + chol * sub.normals(d))
                     .transpose();
  }
  return out;
}

Matrix enkf_analysis(const Matrix& members, const Matrix& h,
                     const SpdMatrix& gamma, const Vector& y,
                     const RngStream& rng, int s) {
  check_analysis_args(members, h, gamma, y, s);
  EmpiricalMoments mom = empirical_moments(members);
  Matrix s_mat = h * mom.cov * h.transpose() + gamma.matrix();
  SpdMatrix s_spd(s_mat);
  Matrix gain = s_spd.solve(Matrix(h * mom.cov)).transpose();
  Matrix data = perturbed_data(y, gamma, members.rows(), rng, s);
  Matrix out(members.rows(), members.cols());
  for (long n = 0; n < members.rows(); ++n) {
    Vector v = members.row(n).transpose();
    out.row(n) =
        (v + gain * (data.row(n).transpose() - h * v)).transpose();
  }
  return out;
}

Matrix enkf_analysis_subspace(const Matrix& members, const Matrix& h,
                              const SpdMatrix& gamma, const Vector& y,
                              const RngStream& rng, int s) {
  check_analysis_args(members, h, gamma, y, s);
  const long n = members.rows();
  const double n_d = static_cast<double>(n);
  EmpiricalMoments mom = empirical_moments(members);
  // Anomaly columns E and their observed images F = H E.
  Matrix anomalies =
      (members.rowwise() - mom.mean.transpose()).transpose();  // d x N
  Matrix f = h * anomalies;                                    // k x N
  Matrix ginv_f = gamma.solve(f);
  Matrix normal =
      f.transpose() * ginv_f / n_d + Matrix::Identity(n, n);
  SpdMatrix normal_spd(0.5 * (normal + normal.transpose()));
  Matrix data = perturbed_data(y, gamma, n, rng, s);
  Matrix out(n, members.cols());
  for (long i = 0; i < n; ++i) {
    Vector v = members.row(i).transpose();
    Vector r = data.row(i).transpose() - h * v;
    Vector b = normal_spd.solve(Vector(ginv_f.transpose() * r));
    out.row(i) = (v + anomalies * b / n_d).transpose();
  }
  return out;
}

}  // namespace dassim::ensemble
