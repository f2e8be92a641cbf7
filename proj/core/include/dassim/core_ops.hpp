#pragma once

#include "dassim/gaussian.hpp"
#include "dassim/rng.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim {

// v^T A^{-1} v via triangular solve against the stored Cholesky factor.
double weighted_sq_norm(const SpdMatrix& a, const Vector& v);

// log N(x; mean, cov).
double gaussian_logpdf(const Vector& x, const Gaussian& g);

// n i.i.d. draws as rows, each mean + L z with z standard normal. Entries of
// z are consumed row-major, so the output is a pure function of the stream key.
Matrix sample_gaussian(const Gaussian& g, int n, RngStream& rng);

Vector spd_solve(const SpdMatrix& a, const Vector& b);
Matrix spd_solve(const SpdMatrix& a, const Matrix& b);

}  // namespace dassim
