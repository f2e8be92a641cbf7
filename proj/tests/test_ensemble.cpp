#include "dassim/ensemble.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "dassim/core_ops.hpp"
#include "dassim/kalman.hpp"

namespace dassim::ensemble {
namespace {

SpdMatrix spd1(double v) { return SpdMatrix((Matrix(1, 1) << v).finished()); }

Vector vec1(double v) { return (Vector(1) << v).finished(); }

Matrix random_members(RngStream& rng, int n, int d) {
  Matrix m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

TEST(EmpiricalMoments, HandExamplesAndConvention) {
  Matrix two = (Matrix(2, 1) << -1.0, 1.0).finished();
  EmpiricalMoments mom = empirical_moments(two);
  EXPECT_NEAR(mom.mean(0), 0.0, 1e-15);
  EXPECT_NEAR(mom.cov(0, 0), 1.0, 1e-15);  // 1/N, not 1/(N-1)
  EXPECT_LT(empirical_moments(Matrix::Ones(5, 2)).cov.norm(), 1e-15);
  EXPECT_LT(empirical_moments(Matrix::Ones(1, 3)).cov.norm(), 1e-15);
}

TEST(EmpiricalMoments, CovariancePsdUpToRoundoff) {
  RngStream rng(70);
  Matrix members = random_members(rng, 6, 4);  // rank-deficient: N > rank
  EmpiricalMoments mom = empirical_moments(members);
  EXPECT_LT((mom.cov - mom.cov.transpose()).norm(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es(mom.cov);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(Exkf, RequiresJacobian) {
  NonlinearModel model([](const Vector& v) { return v; }, nullptr,
                       (Matrix(1, 1) << 1.0).finished(), spd1(1.0), spd1(1.0),
                       Gaussian(vec1(0.0), spd1(1.0)));
  EXPECT_THROW(exkf_step(Gaussian(vec1(0.0), spd1(1.0)), model, vec1(0.0)),
               std::invalid_argument);
}

TEST(Exkf, LinearizedPredictionHandExample) {
  // Psi(v) = v^2 at m = 1: DPsi = 2, so Chat = 4 * 0.01 (+ tiny Sigma).
  // H = 0 makes the analysis the identity, exposing the prediction.
  auto psi = [](const Vector& v) { return Vector(v.array().square()); };
  auto jac = [](const Vector& v) {
    return Matrix((Matrix(1, 1) << 2.0 * v(0)).finished());
  };
  NonlinearModel model(psi, jac, Matrix::Zero(1, 1), spd1(1e-12), spd1(1.0),
                       Gaussian(vec1(0.0), spd1(1.0)));
  Gaussian post = exkf_step(Gaussian(vec1(1.0), spd1(0.01)), model, vec1(0.0));
  EXPECT_NEAR(post.mean(0), 1.0, 1e-12);
  EXPECT_NEAR(post.cov.matrix()(0, 0), 0.04, 1e-10);
}

TEST(Exkf, EqualsKalmanStepForLinearDynamics) {
  RngStream rng(71);
  Matrix m = (Matrix(2, 2) << 0.8, 0.2, -0.1, 0.7).finished();
  Matrix h = (Matrix(1, 2) << 1.0, 0.5).finished();
  Matrix sigma = (Matrix(2, 2) << 0.5, 0.1, 0.1, 0.6).finished();
  Gaussian init((Vector(2) << 0.3, -0.2).finished(),
                SpdMatrix((Matrix(2, 2) << 1.0, 0.2, 0.2, 0.8).finished()));
  NonlinearModel nonlinear([m](const Vector& v) { return Vector(m * v); },
                           [m](const Vector&) { return m; }, h,
                           SpdMatrix(sigma), spd1(0.4), init);
  kalman::LinearModel linear(m, h, SpdMatrix(sigma), spd1(0.4), init);
  Vector y = vec1(0.7);
  Gaussian from_exkf = exkf_step(init, nonlinear, y);
  Gaussian pred = kalman::kf_predict(init, linear);
  Gaussian from_kf =
      kalman::kf_update_gain(pred, h, linear.Gamma, y).post;
  EXPECT_LT((from_exkf.mean - from_kf.mean).norm(), 1e-10);
  EXPECT_LT((from_exkf.cov.matrix() - from_kf.cov.matrix()).norm(), 1e-10);
}

NonlinearModel identity_model_2d(double sigma_scale) {
  return NonlinearModel(
      [](const Vector& v) { return v; },
      [](const Vector&) { return Matrix(Matrix::Identity(2, 2)); },
      Matrix::Identity(2, 2),
      SpdMatrix(Matrix(sigma_scale * Matrix::Identity(2, 2))),
      SpdMatrix(Matrix(Matrix::Identity(2, 2))),
      Gaussian(Vector::Zero(2),
               SpdMatrix((Matrix(2, 2) << 1.0, 0.3, 0.3, 0.8).finished())));
}

TEST(EnkfPredict, TinyNoiseLeavesEnsembleUnchanged) {
  RngStream rng(72);
  Matrix members = random_members(rng, 20, 2);
  Matrix out = enkf_predict(members, identity_model_2d(1e-20), RngStream(5));
  EXPECT_LT((out - members).norm(), 1e-9);
}

TEST(EnkfPredict, DeterministicForFixedSeed) {
  RngStream rng(73);
  Matrix members = random_members(rng, 10, 2);
  NonlinearModel model = identity_model_2d(1.0);
  Matrix a = enkf_predict(members, model, RngStream(6));
  Matrix b = enkf_predict(members, model, RngStream(6));
  EXPECT_EQ((a - b).norm(), 0.0);
}

TEST(EnkfPredict, LargeEnsembleCovarianceMatchesPropagatedLaw) {
  // Psi = id, Sigma = I: predicted law has covariance C0 + I.
  RngStream rng(74);
  NonlinearModel model = identity_model_2d(1.0);
  Matrix members = sample_gaussian(model.init, 10000, rng);
  Matrix out = enkf_predict(members, model, RngStream(7));
  Matrix expected = model.init.cov.matrix() + Matrix::Identity(2, 2);
  EmpiricalMoments mom = empirical_moments(out);
  EXPECT_LT((mom.cov - expected).norm() / expected.norm(), 0.05);
}

TEST(EnkfAnalysis, IdenticalMembersPassThrough) {
  Matrix members = Matrix::Ones(5, 2);
  Matrix h = Matrix::Identity(2, 2);
  SpdMatrix gamma{Matrix(Matrix::Identity(2, 2))};
  Vector y = (Vector(2) << 3.0, -1.0).finished();
  Matrix out = enkf_analysis(members, h, gamma, y, RngStream(8));
  EXPECT_LT((out - members).norm(), 1e-12);
}

TEST(EnkfAnalysis, ZeroObservationOperatorPassThrough) {
  RngStream rng(75);
  Matrix members = random_members(rng, 8, 2);
  Matrix out = enkf_analysis(members, Matrix::Zero(1, 2), spd1(1.0),
                             vec1(0.5), RngStream(9));
  EXPECT_LT((out - members).norm(), 1e-12);
}

TEST(EnkfAnalysis, RejectsBadFlagAndShapes) {
  Matrix members = Matrix::Ones(3, 2);
  SpdMatrix gamma{Matrix(Matrix::Identity(2, 2))};
  EXPECT_THROW(enkf_analysis(members, Matrix::Identity(2, 2), gamma,
                             Vector::Zero(2), RngStream(1), 2),
               std::invalid_argument);
  EXPECT_THROW(enkf_analysis(members, Matrix::Identity(3, 3), gamma,
                             Vector::Zero(3), RngStream(1)),
               std::invalid_argument);
}

TEST(EnkfAnalysis, LargeEnsembleMatchesKalmanPosterior) {
  RngStream rng(76);
  Vector m_hat = (Vector(2) << 0.4, -0.6).finished();
  Matrix c_hat = (Matrix(2, 2) << 1.0, 0.3, 0.3, 0.7).finished();
  Gaussian prior(m_hat, SpdMatrix(c_hat));
  Matrix h = (Matrix(1, 2) << 1.0, -0.5).finished();
  SpdMatrix gamma = spd1(0.4);
  Vector y = vec1(0.9);
  Gaussian exact = kalman::kf_update_gain(prior, h, gamma, y).post;
  Matrix members = sample_gaussian(prior, 10000, rng);
  Matrix out = enkf_analysis(members, h, gamma, y, RngStream(10), 1);
  EmpiricalMoments mom = empirical_moments(out);
  EXPECT_LT((mom.mean - exact.mean).norm() / (1.0 + exact.mean.norm()), 0.05);
  EXPECT_LT((mom.cov - exact.cov.matrix()).norm() / exact.cov.matrix().norm(),
            0.05);
}

TEST(EnkfSubspace, IdenticalMembersAndSingleMemberPassThrough) {
  Matrix members = Matrix::Ones(4, 3);
  Matrix h = Matrix::Identity(3, 3);
  SpdMatrix gamma{Matrix(Matrix::Identity(3, 3))};
  Vector y = (Vector(3) << 1.0, 2.0, 3.0).finished();
  Matrix out = enkf_analysis_subspace(members, h, gamma, y, RngStream(11));
  EXPECT_LT((out - members).norm(), 1e-12);
  Matrix single = (Matrix(1, 3) << 0.5, -0.5, 1.0).finished();
  Matrix out1 = enkf_analysis_subspace(single, h, gamma, y, RngStream(12));
  EXPECT_LT((out1 - single).norm(), 1e-12);
}

TEST(EnkfSubspace, AgreesWithGainFormUnderSharedRandomness) {
  RngStream rng(77);
  struct Case {
    int n, d, k;
  } cases[] = {{3, 5, 2}, {12, 3, 2}};  // N <= d and N > d
  for (const Case& c : cases) {
    Matrix members = random_members(rng, c.n, c.d);
    Matrix h(c.k, c.d);
    for (int i = 0; i < c.k; ++i)
      for (int j = 0; j < c.d; ++j) h(i, j) = rng.normal();
    Matrix g = Matrix::Identity(c.k, c.k) * 0.6;
    g(0, c.k - 1) = g(c.k - 1, 0) = 0.1;
    SpdMatrix gamma{g};
    Vector y(c.k);
    for (int i = 0; i < c.k; ++i) y(i) = rng.normal();
    RngStream shared(13);
    Matrix gain_form = enkf_analysis(members, h, gamma, y, shared, 1);
    Matrix subspace = enkf_analysis_subspace(members, h, gamma, y, shared, 1);
    EXPECT_LT((gain_form - subspace).norm(), 1e-8);
  }
}

TEST(EnkfAnalysis, OutputStaysInForecastAffineSpan) {
  RngStream rng(78);
  const int n = 4, d = 6, k = 2;
  Matrix members = random_members(rng, n, d);
  Matrix h(k, d);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) h(i, j) = rng.normal();
  SpdMatrix gamma{Matrix(Matrix::Identity(k, k))};
  Vector y = (Vector(2) << 0.4, -0.2).finished();
  Matrix out = enkf_analysis(members, h, gamma, y, RngStream(14), 1);
  EmpiricalMoments mom = empirical_moments(members);
  Matrix anomalies = (members.rowwise() - mom.mean.transpose()).transpose();
  auto cod = anomalies.completeOrthogonalDecomposition();
  for (int i = 0; i < n; ++i) {
    Vector shift = (out.row(i) - members.row(i)).transpose();
    Vector residual = shift - anomalies * cod.solve(shift);
    EXPECT_LT(residual.norm(), 1e-8);
  }
}

TEST(EnkfAnalysis, DeterministicVariantCollapsesSpreadExactly) {
  // s = 0: every member sees the same datum, so the anomaly map is linear:
  // output covariance equals (I - KH) Chat (I - KH)^T.
  RngStream rng(79);
  const int n = 7, d = 2;
  Matrix members = random_members(rng, n, d);
  Matrix h = (Matrix(1, 2) << 1.0, 0.5).finished();
  SpdMatrix gamma = spd1(0.3);
  Vector y = vec1(0.2);
  Matrix out = enkf_analysis(members, h, gamma, y, RngStream(15), 0);
  EmpiricalMoments before = empirical_moments(members);
  Matrix s_mat = h * before.cov * h.transpose() + gamma.matrix();
  Matrix gain = (s_mat.inverse() * (h * before.cov)).transpose();
  Matrix factor = Matrix::Identity(d, d) - gain * h;
  Matrix expected = factor * before.cov * factor.transpose();
  EmpiricalMoments after = empirical_moments(out);
  EXPECT_LT((after.cov - expected).norm(), 1e-8);
}

TEST(Enkf, LargeEnsembleErrorDecaysLikeRootN) {
  // Scalar linear-Gaussian model over 5 steps: EnKF mean vs exact Kalman
  // mean; log-log slope over N in {100, 1000, 10000} should be near -1/2.
  kalman::LinearModel linear(
      (Matrix(1, 1) << 0.9).finished(), (Matrix(1, 1) << 1.0).finished(),
      spd1(0.5), spd1(0.3), Gaussian(vec1(0.2), spd1(1.0)));
  NonlinearModel model([](const Vector& v) { return Vector(0.9 * v); },
                       nullptr, (Matrix(1, 1) << 1.0).finished(), spd1(0.5),
                       spd1(0.3), Gaussian(vec1(0.2), spd1(1.0)));
  Matrix data = (Matrix(5, 1) << 0.8, 0.5, 0.9, 0.4, 0.7).finished();
  kalman::FilterTrace trace = kalman_filter(linear, data);
  double exact = trace.updated.back().mean(0);
  const int sizes[3] = {100, 1000, 10000};
  const int n_seeds = 20;
  double log_err[3], log_n[3];
  for (int si = 0; si < 3; ++si) {
    double total = 0.0;
    for (int seed = 0; seed < n_seeds; ++seed) {
      RngStream base(500 + seed);
      RngStream init_rng = base.at_step(0);
      Matrix members = sample_gaussian(model.init, sizes[si], init_rng);
      for (int j = 0; j < 5; ++j) {
        members = enkf_predict(members, model, base.at_step(2 * j + 1));
        members = enkf_analysis(members, model.H, model.Gamma,
                                data.row(j).transpose(),
                                base.at_step(2 * j + 2), 1);
      }
      total += std::abs(empirical_moments(members).mean(0) - exact);
    }
    log_err[si] = std::log(total / n_seeds);
    log_n[si] = std::log(static_cast<double>(sizes[si]));
  }
  double mean_x = (log_n[0] + log_n[1] + log_n[2]) / 3.0;
  double mean_y = (log_err[0] + log_err[1] + log_err[2]) / 3.0;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    num += (log_n[i] - mean_x) * (log_err[i] - mean_y);
    den += (log_n[i] - mean_x) * (log_n[i] - mean_x);
  }
  double slope = num / den;
  EXPECT_GT(slope, -0.7);
  EXPECT_LT(slope, -0.3);
}

}  // namespace
}  // namespace dassim::ensemble
