#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ecpricing/learner.hpp"

using namespace ecpricing;

namespace {

Eigen::MatrixXd random_profiles(std::mt19937_64& rng, int T, int K) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd P(T, K);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) P(t, k) = z(rng);
  return P;
}

// Closed-form Gaussian posterior from all observations at once.
WeightBelief batch_posterior(const WeightBelief& prior, const std::vector<Eigen::MatrixXd>& Ps,
                             const std::vector<Eigen::VectorXd>& ys, double sigma) {
  const Eigen::MatrixXd prior_prec = prior.covariance.inverse();
  Eigen::MatrixXd prec = prior_prec;
  Eigen::VectorXd rhs = prior_prec * prior.mean;
  for (std::size_t i = 0; i < Ps.size(); ++i) {
    prec += Ps[i].transpose() * Ps[i] / (sigma * sigma);
    rhs += Ps[i].transpose() * ys[i] / (sigma * sigma);
  }
  WeightBelief b;
  b.covariance = prec.inverse();
  b.mean = b.covariance * rhs;
  return b;
}

}  // namespace

TEST(Prior, DiagonalWithPvStretch) {
  const auto b = init_prior(10);
  EXPECT_DOUBLE_EQ(b.mean(0), 0.5);
  EXPECT_DOUBLE_EQ(b.mean(3), 1.5);
  EXPECT_DOUBLE_EQ(b.covariance(0, 0), 0.15 * 0.15);
  EXPECT_DOUBLE_EQ(b.covariance(3, 3), 0.45 * 0.45);
  EXPECT_DOUBLE_EQ(b.covariance(0, 1), 0.0);
  EXPECT_THROW(init_prior(10, PriorConfig{0.5, 0.0}), ConfigError);
  EXPECT_THROW(init_prior(10, PriorConfig{0.5, 0.1, -1.0}), ConfigError);
}

TEST(Prior, MonteCarloMomentsMatch) {
  const auto b = init_prior(10);
  std::mt19937_64 rng(123);
  const int n = 40000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(10), sq = Eigen::VectorXd::Zero(10);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd s = sample_weights(b, rng);
    sum += s;
    sq += s.cwiseProduct(s);
  }
  for (int k = 0; k < 10; ++k) {
    const double m = sum(k) / n, sd = std::sqrt(sq(k) / n - m * m);
    const double target_sd = std::sqrt(b.covariance(k, k));
    EXPECT_NEAR(m, b.mean(k), 5.0 * target_sd / std::sqrt(double(n))) << k;
    EXPECT_NEAR(sd, target_sd, 0.02 * target_sd) << k;
  }
}

TEST(Sampling, CorrelatedCovarianceMoments) {
  WeightBelief b;
  b.mean = Eigen::Vector3d(1.0, -1.0, 0.0);
  Eigen::Matrix3d A;
  A << 1.0, 0.0, 0.0, 0.8, 0.6, 0.0, 0.2, -0.3, 0.5;
  b.covariance = A * A.transpose();
  std::mt19937_64 rng(4);
  const int n = 60000;
  Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d d = sample_weights(b, rng) - b.mean;
    acc += d * d.transpose();
  }
  EXPECT_LT(((acc / n) - b.covariance).cwiseAbs().maxCoeff(), 0.03);
}

TEST(Sampling, SingularCovarianceIsHandled) {
  WeightBelief b;
  b.mean = Eigen::VectorXd::Constant(4, 0.3);
  b.covariance = Eigen::MatrixXd::Zero(4, 4);
  EXPECT_TRUE(sample_weights(b, std::uint64_t{7}).isApprox(b.mean));
  b.covariance(1, 1) = 1.0;  // rank one
  const auto s = sample_weights(b, std::uint64_t{7});
  EXPECT_DOUBLE_EQ(s(0), 0.3);
  EXPECT_DOUBLE_EQ(s(2), 0.3);
  EXPECT_EQ(sample_weights(b, std::uint64_t{7}), s);  // seeded draws repeat
}

TEST(Posterior, RecursiveEqualsBatchOnRandomScenarios) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int scenario = 0; scenario < 50; ++scenario) {
    const int K = 10, T = 24, days = 1 + scenario % 8;
    const double sigma = 0.05 + 0.1 * (scenario % 5);
    const auto prior = init_prior(K);
    Eigen::VectorXd truth(K);
    for (int k = 0; k < K; ++k) truth(k) = 0.5 + 0.3 * z(rng);
    std::vector<Eigen::MatrixXd> Ps;
    std::vector<Eigen::VectorXd> ys;
    WeightBelief b = prior;
    for (int d = 0; d < days; ++d) {
      Ps.push_back(random_profiles(rng, T, K));
      Eigen::VectorXd y = Ps.back() * truth;
      for (int t = 0; t < T; ++t) y(t) += sigma * z(rng);
      ys.push_back(y);
      b = update_posterior(b, Ps.back(), y, NoiseModel{sigma});
      ASSERT_GE(b.min_eigenvalue(), -1e-12) << "scenario " << scenario << " day " << d;
      ASSERT_NO_THROW(b.validate());
    }
    const auto ref = batch_posterior(prior, Ps, ys, sigma);
    const double dm = (b.mean - ref.mean).cwiseAbs().maxCoeff();
    const double dc = (b.covariance - ref.covariance).cwiseAbs().maxCoeff();
    worst = std::max({worst, dm, dc});
    EXPECT_LE(dm, 1e-8) << "scenario " << scenario;
    EXPECT_LE(dc, 1e-8) << "scenario " << scenario;
  }
  RecordProperty("max_abs_difference", std::to_string(worst));
}

TEST(Posterior, ConcentratesOnTruth) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd truth(4);
  truth << 0.2, 0.7, 1.1, 0.0;
  auto b = init_prior(4);
  for (int d = 0; d < 60; ++d) {
    const auto P = random_profiles(rng, 24, 4);
    Eigen::VectorXd y = P * truth;
    for (int t = 0; t < 24; ++t) y(t) += 0.1 * z(rng);
    b = update_posterior(b, P, y, NoiseModel{0.1});
  }
  EXPECT_LT((b.mean - truth).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT(b.covariance.trace(), 1e-4);
}

TEST(Posterior, UninformativeColumnsKeepPrior) {
  auto b = init_prior(3);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(5, 3);
  P.col(0).setOnes();
  const auto post = update_posterior(b, P, Eigen::VectorXd::Constant(5, 0.9), NoiseModel{0.1});
  EXPECT_DOUBLE_EQ(post.mean(1), b.mean(1));
  EXPECT_DOUBLE_EQ(post.covariance(2, 2), b.covariance(2, 2));
  EXPECT_GT(post.mean(0), b.mean(0));
}

TEST(Posterior, RejectsBadInput) {
  auto b = init_prior(3);
  EXPECT_THROW(update_posterior(b, Eigen::MatrixXd::Zero(4, 2), Eigen::VectorXd::Zero(4), NoiseModel{0.1}), InvalidArgument);
  EXPECT_THROW(update_posterior(b, Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(5), NoiseModel{0.1}), InvalidArgument);
  EXPECT_THROW(update_posterior(b, Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4), NoiseModel{-1.0}), ConfigError);
  // zero noise with more periods than signatures leaves S singular
  std::mt19937_64 rng(1);
  EXPECT_THROW(update_posterior(b, random_profiles(rng, 6, 3), Eigen::VectorXd::Zero(6), NoiseModel{0.0}), ConfigError);
  WeightBelief bad = b;
  bad.covariance(0, 0) = -1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(ShiftDetector, FiresAfterWindowOfLargeErrors) {
  ShiftDetector d(1.0, 3);
  EXPECT_FALSE(d.observe_distance(2.0));
  EXPECT_FALSE(d.observe_distance(2.0));
  EXPECT_TRUE(d.observe_distance(2.0));
  // a day below tolerance restarts the count
  EXPECT_FALSE(d.observe_distance(2.0));
  EXPECT_FALSE(d.observe_distance(0.5));
  EXPECT_FALSE(d.observe_distance(2.0));
  EXPECT_FALSE(d.observe_distance(2.0));
  EXPECT_TRUE(d.observe_distance(2.0));
}

TEST(ShiftDetector, SettledVariantIgnoresEarlyErrors) {
  ShiftDetector d(1.0, 2, true);
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(d.observe_distance(3.0));
  EXPECT_FALSE(d.armed());
  EXPECT_FALSE(d.observe_distance(0.2));
  EXPECT_FALSE(d.observe_distance(0.2));
  EXPECT_TRUE(d.armed());
  EXPECT_FALSE(d.observe_distance(3.0));
  EXPECT_TRUE(d.observe_distance(3.0));
  EXPECT_FALSE(d.armed());  // disarmed again after firing
}

TEST(ShiftDetector, RmsDistance) {
  ShiftDetector d(0.5, 1);
  const Eigen::Vector4d a(1, 1, 1, 1), b(2, 0, 2, 0);
  EXPECT_TRUE(d.observe(a, b));
  EXPECT_DOUBLE_EQ(d.last_distance(), 1.0);
  EXPECT_THROW(ShiftDetector(-1.0, 1), ConfigError);
  EXPECT_THROW(ShiftDetector(1.0, 0), ConfigError);
}

TEST(Belief, RowsAreWrittenPerSignature) {
  std::ostringstream os;
  write_belief_rows(os, 4, 2, init_prior(2, PriorConfig{0.5, 0.1, 3.0, {}}));
  EXPECT_EQ(os.str(), "4,2,0,0.5,0.010000000000000002\n4,2,1,0.5,0.010000000000000002\n");
}
