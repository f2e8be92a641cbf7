#include "dassim/core_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace dassim {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double weighted_sq_norm(const SpdMatrix& a, const Vector& v) {
  if (v.size() != a.dim()) {
    throw std::invalid_argument("weighted_sq_norm: dimension mismatch");
  }
  const Vector w = a.llt().matrixL().solve(v);
  return w.squaredNorm();
}

double gaussian_logpdf(const Vector& x, const Gaussian& g) {
  if (x.size() != g.dim()) {
    throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  }
  const double q = weighted_sq_norm(g.cov, x - g.mean);
  return -0.5 * q - 0.5 * g.dim() * kLog2Pi - 0.5 * g.cov.log_det();
}

Matrix sample_gaussian(const Gaussian& g, int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("sample_gaussian: n must be >= 1");
  const int d = g.dim();
  const Matrix l = g.cov.chol_lower();
  Matrix out(n, d);
  for (int i = 0; i < n; ++i) {
    out.row(i) = (g.mean + l * rng.normals(d)).transpose();
  }
  return out;
}

Vector spd_solve(const SpdMatrix& a, const Vector& b) {
  if (b.size() != a.dim()) {
    throw std::invalid_argument("spd_solve: dimension mismatch");
  }
  return a.solve(b);
}

Matrix spd_solve(const SpdMatrix& a, const Matrix& b) {
  if (b.rows() != a.dim()) {
    throw std::invalid_argument("spd_solve: dimension mismatch");
  }
  return a.solve(b);
}

}  // namespace dassim
