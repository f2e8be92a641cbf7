#pragma once

#include <cstdint>
#include <vector>

#include "dassim/gaussian.hpp"
#include "dassim/types.hpp"

namespace dassim::metrics {

// Probability vector over finitely many atoms; entries >= 0, sum within
// 1e-12 of 1.
class DiscreteDist {
 public:
  explicit DiscreteDist(Vector p);
  // Normalizes a nonnegative weight vector with positive sum.
  static DiscreteDist normalized(const Vector& w);

  int size() const { return static_cast<int>(p_.size()); }
  const Vector& probs() const { return p_; }
  double expectation(const Vector& f) const;

 private:
  Vector p_;
};

// Density on a uniform grid over [lo, hi] with at least 2048 points,
// renormalized by trapezoid quadrature at construction.
class GridDensity1D {
 public:
  GridDensity1D(double lo, double hi, Vector values);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double dx() const { return dx_; }
  int size() const { return static_cast<int>(v_.size()); }
  const Vector& values() const { return v_; }

  // Trapezoid integral of an arbitrary per-point integrand.
  double trapezoid(const Vector& integrand) const;

 private:
  double lo_, hi_, dx_;
  Vector v_;
};

double tv_distance(const DiscreteDist& p, const DiscreteDist& q);
double tv_distance(const GridDensity1D& p, const GridDensity1D& q);

double hellinger_distance(const DiscreteDist& p, const DiscreteDist& q);
double hellinger_distance(const GridDensity1D& p, const GridDensity1D& q);

// KL(p || q). Errors when q vanishes (< 1e-300) where p carries mass
// (> 1e-12).
double kl_divergence(const DiscreteDist& p, const DiscreteDist& q);
double kl_divergence(const GridDensity1D& p, const GridDensity1D& q);

// chi^2(p || q) = sum (p/q - 1)^2 q, same support rule as KL.
double chi2_divergence(const DiscreteDist& p, const DiscreteDist& q);
double chi2_divergence(const GridDensity1D& p, const GridDensity1D& q);

// KL(p || q) for Gaussians:
// (tr(Cq^{-1} Cp) + |mq - mp|^2_{Cq} - d + log det Cq - log det Cp) / 2.
double kl_gaussian(const Gaussian& p, const Gaussian& q);

// All sign patterns on `atoms` atoms (atoms <= 12).
std::vector<Vector> sign_dictionary(int atoms);
// sign_dictionary when atoms <= 12, otherwise 256 seeded random +-1 vectors.
std::vector<Vector> default_dictionary(int atoms, std::uint64_t seed = 0);

// Lower bound on the random-measure distance between two replicated random
// measures over shared atoms: max over dictionary functions f (|f|_inf <= 1)
// of the RMS gap sqrt(mean_r (E_{p_r} f - E_{q_r} f)^2). Replicates are
// paired by index. With single deterministic replicates and the sign
// dictionary this equals exactly twice the total variation distance.
double random_measure_distance(const std::vector<DiscreteDist>& reps_p,
                               const std::vector<DiscreteDist>& reps_q,
                               const std::vector<Vector>& dictionary);

}  // namespace dassim::metrics
