#pragma once

#include <Eigen/Cholesky>

#include "dassim/types.hpp"

namespace dassim {

// Symmetric positive definite matrix with a cached Cholesky factorization.
// Construction symmetrizes (A + A^T)/2, rejects inputs whose asymmetry
// exceeds 1e-10 relative to the largest entry, and rejects factorizations
// whose smallest pivot falls below 1e-12 times the largest diagonal entry.
class SpdMatrix {
 public:
  explicit SpdMatrix(const Matrix& a);

  int dim() const { return static_cast<int>(a_.rows()); }
  const Matrix& matrix() const { return a_; }
  double log_det() const { return log_det_; }

  // L with A = L L^T.
  Matrix chol_lower() const { return llt_.matrixL(); }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }

 private:
  Matrix a_;
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0;
};

}  // namespace dassim
