#pragma once

#include <Eigen/Dense>

namespace dassim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace dassim
