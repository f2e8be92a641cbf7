#pragma once

#include <stdexcept>
#include <utility>

#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim {

// Gaussian measure N(mean, cov) on R^d.
struct Gaussian {
  Vector mean;
  SpdMatrix cov;

  Gaussian(Vector m, SpdMatrix c) : mean(std::move(m)), cov(std::move(c)) {
    if (mean.size() != cov.dim()) {
      throw std::invalid_argument("Gaussian: mean/covariance dimension mismatch");
    }
  }

  int dim() const { return static_cast<int>(mean.size()); }
};

}  // namespace dassim
