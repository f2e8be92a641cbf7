#include "dassim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dassim/core_ops.hpp"
#include "dassim/error.hpp"
#include "dassim/rng.hpp"

namespace dassim::metrics {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kSupportFloor = 1e-300;  // q below this counts as zero
constexpr double kMassFloor = 1e-12;      // p above this needs q support
constexpr int kMinGridPoints = 2048;
constexpr int kMaxSignAtoms = 12;
constexpr int kRandomDictionarySize = 256;

void check_same_grid(const GridDensity1D& p, const GridDensity1D& q) {
  if (p.lo() != q.lo() || p.hi() != q.hi() || p.size() != q.size()) {
    throw std::invalid_argument("grid densities must share lo/hi/resolution");
  }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Pointwise p log(p/q) with the shared support rule.
double kl_term(double p, double q) {
  if (q < kSupportFloor) {
    if (p > kMassFloor) {
      throw NumericalError("kl_divergence: q vanishes where p carries mass");
    }
    return 0.0;
  }
  if (p <= 0.0) return 0.0;
  return p * std::log(p / q);
}

double chi2_term(double p, double q) {
  if (q < kSupportFloor) {
    if (p > kMassFloor) {
      throw NumericalError("chi2_divergence: q vanishes where p carries mass");
    }
    return 0.0;
  }
  const double r = p / q - 1.0;
  return r * r * q;
}

}  // namespace

DiscreteDist::DiscreteDist(Vector p) : p_(std::move(p)) {
  if (p_.size() == 0) {
    throw std::invalid_argument("DiscreteDist: empty probability vector");
  }
  if (p_.minCoeff() < 0.0) {
    throw std::invalid_argument("DiscreteDist: negative probability");
  }
  if (std::abs(p_.sum() - 1.0) > kMassTol) {
    throw std::invalid_argument("DiscreteDist: probabilities must sum to 1");
  }
}

DiscreteDist DiscreteDist::normalized(const Vector& w) {
  if (w.size() == 0 || w.minCoeff() < 0.0) {
    throw std::invalid_argument("DiscreteDist: weights must be nonnegative");
  }
  const double s = w.sum();
  if (!(s > 0.0)) {
    throw std::invalid_argument("DiscreteDist: weights sum to zero");
  }
  return DiscreteDist(w / s);
}

double DiscreteDist::expectation(const Vector& f) const {
  if (f.size() != p_.size()) {
    throw std::invalid_argument("DiscreteDist: test function size mismatch");
  }
  return p_.dot(f);
}

GridDensity1D::GridDensity1D(double lo, double hi, Vector values)
    : lo_(lo), hi_(hi), v_(std::move(values)) {
  if (!(lo < hi)) {
    throw std::invalid_argument("GridDensity1D: requires lo < hi");
  }
  if (v_.size() < kMinGridPoints) {
    throw std::invalid_argument("GridDensity1D: needs at least 2048 points");
  }
  if (v_.minCoeff() < 0.0) {
    throw std::invalid_argument("GridDensity1D: negative density value");
  }
  dx_ = (hi_ - lo_) / (v_.size() - 1);
  const double mass = trapezoid(v_);
  if (!(mass > 0.0)) {
    throw std::invalid_argument("GridDensity1D: density integrates to zero");
  }
  v_ /= mass;
}

double GridDensity1D::trapezoid(const Vector& integrand) const {
  if (integrand.size() != v_.size()) {
    throw std::invalid_argument("GridDensity1D: integrand size mismatch");
  }
  const auto n = integrand.size();
  return dx_ * (integrand.sum() - 0.5 * (integrand[0] + integrand[n - 1]));
}

double tv_distance(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("tv_distance: size mismatch");
  }
  return clamp01(0.5 * (p.probs() - q.probs()).cwiseAbs().sum());
}

double tv_distance(const GridDensity1D& p, const GridDensity1D& q) {
  check_same_grid(p, q);
  return clamp01(
      0.5 * p.trapezoid((p.values() - q.values()).cwiseAbs()));
}

double hellinger_distance(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("hellinger_distance: size mismatch");
  }
  const Vector diff = p.probs().cwiseSqrt() - q.probs().cwiseSqrt();
  return clamp01(std::sqrt(0.5 * diff.squaredNorm()));
}

double hellinger_distance(const GridDensity1D& p, const GridDensity1D& q) {
  check_same_grid(p, q);
  const Vector diff = p.values().cwiseSqrt() - q.values().cwiseSqrt();
  return clamp01(std::sqrt(0.5 * p.trapezoid(diff.cwiseProduct(diff))));
}

double kl_divergence(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: size mismatch");
  }
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) s += kl_term(p.probs()[i], q.probs()[i]);
  return s;
}

double kl_divergence(const GridDensity1D& p, const GridDensity1D& q) {
  check_same_grid(p, q);
  Vector integrand(p.size());
  for (int i = 0; i < p.size(); ++i) {
    integrand[i] = kl_term(p.values()[i], q.values()[i]);
  }
  return p.trapezoid(integrand);
}

double chi2_divergence(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("chi2_divergence: size mismatch");
  }
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    s += chi2_term(p.probs()[i], q.probs()[i]);
  }
  return s;
}

double chi2_divergence(const GridDensity1D& p, const GridDensity1D& q) {
  check_same_grid(p, q);
  Vector integrand(p.size());
  for (int i = 0; i < p.size(); ++i) {
    integrand[i] = chi2_term(p.values()[i], q.values()[i]);
  }
  return p.trapezoid(integrand);
}

double kl_gaussian(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) {
    throw std::invalid_argument("kl_gaussian: dimension mismatch");
  }
  const int d = p.dim();
  const double trace = q.cov.solve(p.cov.matrix()).trace();
  const double shift = weighted_sq_norm(q.cov, p.mean - q.mean);
  return 0.5 * (trace + shift - d + q.cov.log_det() - p.cov.log_det());
}

std::vector<Vector> sign_dictionary(int atoms) {
  if (atoms < 1 || atoms > kMaxSignAtoms) {
    throw std::invalid_argument("sign_dictionary: atoms must be in [1, 12]");
  }
  std::vector<Vector> dict;
  dict.reserve(std::size_t{1} << atoms);
  for (std::size_t mask = 0; mask < (std::size_t{1} << atoms); ++mask) {
    Vector f(atoms);
    for (int i = 0; i < atoms; ++i) {
      f[i] = (mask >> i) & 1 ? 1.0 : -1.0;
    }
    dict.push_back(std::move(f));
  }
  return dict;
}

std::vector<Vector> default_dictionary(int atoms, std::uint64_t seed) {
  if (atoms <= kMaxSignAtoms) return sign_dictionary(atoms);
  RngStream rng(seed, /*phase=*/0xD1C7);
  std::vector<Vector> dict;
  dict.reserve(kRandomDictionarySize);
  for (int k = 0; k < kRandomDictionarySize; ++k) {
    Vector f(atoms);
    for (int i = 0; i < atoms; ++i) f[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    dict.push_back(std::move(f));
  }
  return dict;
}

double random_measure_distance(const std::vector<DiscreteDist>& reps_p,
                               const std::vector<DiscreteDist>& reps_q,
                               const std::vector<Vector>& dictionary) {
  if (reps_p.empty() || reps_p.size() != reps_q.size()) {
    throw std::invalid_argument(
        "random_measure_distance: replicates must pair up and be nonempty");
  }
  if (dictionary.empty()) {
    throw std::invalid_argument("random_measure_distance: empty dictionary");
  }
  const int atoms = reps_p.front().size();
  for (const auto& r : reps_p) {
    if (r.size() != atoms) {
      throw std::invalid_argument("random_measure_distance: atom mismatch");
    }
  }
  for (const auto& r : reps_q) {
    if (r.size() != atoms) {
      throw std::invalid_argument("random_measure_distance: atom mismatch");
    }
  }
  double best = 0.0;
  for (const Vector& f : dictionary) {
    if (f.size() != atoms) {
      throw std::invalid_argument("random_measure_distance: bad dictionary");
    }
    if (f.cwiseAbs().maxCoeff() > 1.0 + 1e-12) {
      throw std::invalid_argument(
          "random_measure_distance: dictionary functions must satisfy |f| <= 1");
    }
    double ms = 0.0;
    for (std::size_t r = 0; r < reps_p.size(); ++r) {
      const double gap = reps_p[r].expectation(f) - reps_q[r].expectation(f);
      ms += gap * gap;
    }
    best = std::max(best, ms / static_cast<double>(reps_p.size()));
  }
  return std::sqrt(best);
}

}  // namespace dassim::metrics
