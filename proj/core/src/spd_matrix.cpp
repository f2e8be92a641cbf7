#include "dassim/spd_matrix.hpp"

#include <cmath>
#include <stdexcept>

#include "dassim/error.hpp"

namespace dassim {

namespace {
constexpr double kAsymmetryTol = 1e-10;  // relative to the largest entry
constexpr double kPivotTol = 1e-12;      // relative to the largest diagonal
}  // namespace

SpdMatrix::SpdMatrix(const Matrix& a) {
  if (a.rows() == 0 || a.rows() != a.cols()) {
    throw std::invalid_argument("SpdMatrix: square nonempty matrix required");
  }
  const double scale = a.cwiseAbs().maxCoeff();
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kAsymmetryTol * scale) {
    throw NumericalError("SpdMatrix: input asymmetry exceeds tolerance");
  }
  a_ = 0.5 * (a + a.transpose());

  llt_.compute(a_);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("SpdMatrix: matrix is not positive definite");
  }
  // Elimination pivots are the squared Cholesky diagonal.
  const Vector ldiag = llt_.matrixLLT().diagonal();
  const double min_pivot = ldiag.array().square().minCoeff();
  const double max_diag = a_.diagonal().maxCoeff();
  if (!(min_pivot >= kPivotTol * max_diag)) {
    throw NumericalError("SpdMatrix: smallest pivot below threshold");
  }
  log_det_ = 2.0 * ldiag.array().log().sum();
}

}  // namespace dassim
