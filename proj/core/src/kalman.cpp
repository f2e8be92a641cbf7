#include "dassim/kalman.hpp"

#include <Eigen/Eigenvalues>
#include <stdexcept>
#include <utility>

#include "dassim/error.hpp"

namespace dassim::kalman {
namespace {

constexpr double kEigenFloor = 1e-12;

}  // namespace

LinearModel::LinearModel(Matrix m, Matrix h, SpdMatrix sigma, SpdMatrix gamma,
                         Gaussian init_state)
    : M(std::move(m)),
      H(std::move(h)),
      Sigma(std::move(sigma)),
      Gamma(std::move(gamma)),
      init(std::move(init_state)) {
  const int d = static_cast<int>(M.rows());
  if (M.cols() != d) throw std::invalid_argument("dynamics matrix must be square");
  if (H.cols() != d)
    throw std::invalid_argument("observation matrix has wrong state dimension");
  if (Sigma.dim() != d)
    throw std::invalid_argument("model noise covariance has wrong dimension");
  if (Gamma.dim() != static_cast<int>(H.rows()))
    throw std::invalid_argument("data noise covariance has wrong dimension");
  if (init.dim() != d)
    throw std::invalid_argument("initial state has wrong dimension");
}

SpdMatrix floored_covariance(Matrix c) {
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.info() != Eigen::Success)
    throw NumericalError("eigendecomposition failed in covariance cleanup");
  if (es.eigenvalues().minCoeff() < kEigenFloor) {
    Vector evals = es.eigenvalues().cwiseMax(kEigenFloor);
    c = es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();
    c = 0.5 * (c + c.transpose()).eval();
  }
  return SpdMatrix(c);
}

Gaussian kf_predict(const Gaussian& post, const LinearModel& model) {
  if (post.dim() != model.state_dim())
    throw std::invalid_argument("state dimension mismatch in predict");
  Vector mean = model.M * post.mean;
  Matrix cov = model.M * post.cov.matrix() * model.M.transpose() +
               model.Sigma.matrix();
  return Gaussian(std::move(mean), floored_covariance(std::move(cov)));
}

Gaussian kf_update_precision(const Gaussian& pred, const Matrix& h,
                             const SpdMatrix& gamma, const Vector& y) {
  const int d = pred.dim();
  if (h.cols() != d)
    throw std::invalid_argument("observation matrix has wrong state dimension");
  if (gamma.dim() != h.rows() || y.size() != h.rows())
    throw std::invalid_argument("data dimension mismatch in update");
  Matrix identity = Matrix::Identity(d, d);
  Matrix precision =
      pred.cov.solve(identity) + h.transpose() * gamma.solve(h);
  SpdMatrix prec(precision);
  Vector rhs = pred.cov.solve(pred.mean) + h.transpose() * gamma.solve(y);
  Vector mean = prec.solve(rhs);
  Matrix cov = prec.solve(identity);
  return Gaussian(std::move(mean), floored_covariance(std::move(cov)));
}

GainUpdate kf_update_gain(const Gaussian& pred, const Matrix& h,
                          const SpdMatrix& gamma, const Vector& y) {
  const int d = pred.dim();
  if (h.cols() != d)
    throw std::invalid_argument("observation matrix has wrong state dimension");
  if (gamma.dim() != h.rows() || y.size() != h.rows())
    throw std::invalid_argument("data dimension mismatch in update");
  const Matrix& chat = pred.cov.matrix();
  Matrix s = h * chat * h.transpose() + gamma.matrix();
  SpdMatrix s_spd(s);
  Matrix gain = s_spd.solve(Matrix(h * chat)).transpose();
  Vector innovation = y - h * pred.mean;
  Vector mean = pred.mean + gain * innovation;
  Matrix cov = (Matrix::Identity(d, d) - gain * h) * chat;
  return GainUpdate{Gaussian(std::move(mean), floored_covariance(std::move(cov))),
                    std::move(gain), std::move(innovation)};
}

FilterTrace kalman_filter(const LinearModel& model, const Matrix& data) {
  if (data.cols() != model.obs_dim())
    throw std::invalid_argument("data has wrong observation dimension");
  FilterTrace trace;
  trace.updated.push_back(model.init);
  for (long j = 0; j < data.rows(); ++j) {
    Gaussian pred = kf_predict(trace.updated.back(), model);
    GainUpdate res =
        kf_update_gain(pred, model.H, model.Gamma, data.row(j).transpose());
    trace.predicted.push_back(std::move(pred));
    trace.gains.push_back(std::move(res.gain));
    trace.innovations.push_back(std::move(res.innovation));
    trace.updated.push_back(std::move(res.post));
  }
  return trace;
}

SmootherResult kalman_smoother(const LinearModel& model, const Matrix& data) {
  if (data.rows() < 1)
    throw std::invalid_argument("smoother needs at least one observation");
  if (data.cols() != model.obs_dim())
    throw std::invalid_argument("data has wrong observation dimension");
  const int d = model.state_dim();
  const long big_j = data.rows();
  Matrix identity = Matrix::Identity(d, d);
  Matrix c0_inv = model.init.cov.solve(identity);
  Matrix sigma_inv = model.Sigma.solve(identity);
  Matrix sinv_m = model.Sigma.solve(model.M);
  Matrix mt_sinv_m = model.M.transpose() * sinv_m;
  Matrix ht_ginv_h = model.H.transpose() * model.Gamma.solve(model.H);
  // Off-diagonal block Omega_{j,j+1} = -A with A = M^T Sigma^{-1}.
  Matrix a = sinv_m.transpose();

  // Forward Schur elimination:
  //   S_0 = Omega_00, w_0 = r_0,
  //   S_{j+1} = Omega_{j+1,j+1} - A^T S_j^{-1} A,
  //   w_{j+1} = r_{j+1} + A^T S_j^{-1} w_j.
  std::vector<SpdMatrix> schur;
  schur.reserve(big_j + 1);
  std::vector<Vector> w(big_j + 1);
  schur.emplace_back(Matrix(c0_inv + mt_sinv_m));
  w[0] = c0_inv * model.init.mean;
  for (long j = 1; j <= big_j; ++j) {
    Matrix diag = sigma_inv + ht_ginv_h;
    if (j < big_j) diag += mt_sinv_m;
    Vector r_j =
        model.H.transpose() * model.Gamma.solve(Vector(data.row(j - 1)));
    Matrix next = diag - a.transpose() * schur[j - 1].solve(a);
    w[j] = r_j + a.transpose() * schur[j - 1].solve(w[j - 1]);
    schur.emplace_back(0.5 * (next + next.transpose()));
  }

  // Back-substitution: S_J m_J = w_J, then S_j m_j = w_j + A m_{j+1}.
  SmootherResult res;
  res.means.resize(big_j + 1, d);
  res.means.row(big_j) = schur[big_j].solve(w[big_j]).transpose();
  for (long j = big_j - 1; j >= 0; --j) {
    Vector rhs = w[j] + a * res.means.row(j + 1).transpose();
    res.means.row(j) = schur[j].solve(rhs).transpose();
  }
  res.block_precisions.reserve(big_j + 1);
  for (const SpdMatrix& s : schur) res.block_precisions.push_back(s.matrix());
  return res;
}

SmootherSystem assemble_smoother_system(const LinearModel& model,
                                        const Matrix& data) {
  if (data.rows() < 1)
    throw std::invalid_argument("smoother needs at least one observation");
  if (data.cols() != model.obs_dim())
    throw std::invalid_argument("data has wrong observation dimension");
  const int d = model.state_dim();
  const long big_j = data.rows();
  const long n = (big_j + 1) * d;
  Matrix identity = Matrix::Identity(d, d);
  Matrix c0_inv = model.init.cov.solve(identity);
  Matrix sigma_inv = model.Sigma.solve(identity);
  Matrix sinv_m = model.Sigma.solve(model.M);
  Matrix mt_sinv_m = model.M.transpose() * sinv_m;
  Matrix ht_ginv_h = model.H.transpose() * model.Gamma.solve(model.H);
  SmootherSystem sys;
  sys.omega = Matrix::Zero(n, n);
  sys.r = Vector::Zero(n);
  for (long j = 0; j <= big_j; ++j) {
    Matrix diag;
    if (j == 0) {
      diag = c0_inv + mt_sinv_m;
      sys.r.segment(0, d) = c0_inv * model.init.mean;
    } else {
      diag = sigma_inv + ht_ginv_h;
      if (j < big_j) diag += mt_sinv_m;
      sys.r.segment(j * d, d) =
          model.H.transpose() * model.Gamma.solve(Vector(data.row(j - 1)));
    }
    sys.omega.block(j * d, j * d, d, d) = diag;
    if (j < big_j) {
      sys.omega.block(j * d, (j + 1) * d, d, d) = -sinv_m.transpose();
      sys.omega.block((j + 1) * d, j * d, d, d) = -sinv_m;
    }
  }
  return sys;
}

}  // namespace dassim::kalman
