#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "emguide/estimation.hpp"

using namespace emguide;

namespace {

PenEstimate moving(const Vec2& p, const Vec2& v) {
  PenEstimate e;
  e.position = p;
  e.velocity = v;
  return e;
}

}  // namespace

TEST(KfPredict, ZeroVelocityGrowsCovarianceOnly) {
  const KalmanNoise noise;
  const PenEstimate e = moving(Vec2(0.1, 0.2), Vec2::Zero());
  const PenEstimate p = kf_predict(e, 0.02, noise);
  EXPECT_EQ(p.position, e.position);
  EXPECT_GT(p.covariance.trace(), e.covariance.trace());
  EXPECT_EQ(p.velocity, Vec2::Zero());
}

TEST(KfPredict, ConstantVelocityExtrapolation) {
  const KalmanNoise noise;
  PenEstimate e = moving(Vec2(0.1, 0.2), Vec2(0.05, -0.02));
  for (int k = 0; k < 25; ++k) e = kf_predict(e, 0.02, noise);
  EXPECT_NEAR((e.position - (Vec2(0.1, 0.2) + 25 * 0.02 * Vec2(0.05, -0.02))).norm(), 0.0, 1e-14);
}

TEST(KfPredict, TraceStrictlyIncreases) {
  const KalmanNoise noise;
  PenEstimate e = moving(Vec2::Zero(), Vec2(0.01, 0.0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dt(1e-3, 0.05);
  for (int k = 0; k < 200; ++k) {
    const double before = e.covariance.trace();
    e = kf_predict(e, dt(rng), noise);
    EXPECT_GT(e.covariance.trace(), before);
    if (k % 3 == 0) e = kf_update(e, e.position, noise).estimate;
  }
}

TEST(KfPredict, RejectsNonPositiveDt) {
  EXPECT_THROW(kf_predict(PenEstimate{}, 0.0, KalmanNoise{}), std::invalid_argument);
}

TEST(KfUpdate, MeasurementAtPredictionKeepsPosition) {
  const KalmanNoise noise;
  const PenEstimate e = kf_predict(moving(Vec2(0.1, 0.1), Vec2(0.02, 0.01)), 0.02, noise);
  const UpdateOutcome u = kf_update(e, e.position, noise);
  EXPECT_FALSE(u.rejected);
  EXPECT_NEAR((u.estimate.position - e.position).norm(), 0.0, 1e-15);
  EXPECT_LT(u.estimate.covariance.trace(), e.covariance.trace());
}

TEST(KfUpdate, NonFiniteMeasurementRejected) {
  const KalmanNoise noise;
  const PenEstimate e = moving(Vec2(0.1, 0.1), Vec2::Zero());
  const UpdateOutcome u = kf_update(e, Vec2(std::nan(""), 0.0), noise);
  EXPECT_TRUE(u.rejected);
  EXPECT_EQ(u.estimate.position, e.position);
}

TEST(KfUpdate, NoiselessConstantVelocityTrack) {
  const KalmanNoise noise;
  const Vec2 v(0.08, -0.03), p0(0.05, 0.2);
  PenTracker tracker(noise);
  for (int k = 0; k <= 100; ++k) tracker.observe(0.02 * k, p0 + 0.02 * k * v);
  EXPECT_LT((tracker.estimate().velocity - v).norm(), 1e-3);
}

TEST(KfUpdate, RepeatedMeasurementConverges) {
  const KalmanNoise noise;
  PenEstimate e = moving(Vec2(0.1, 0.1), Vec2(0.05, 0.05));
  const Vec2 z(0.12, 0.09);
  for (int k = 0; k < 2000; ++k) e = kf_update(kf_predict(e, 0.02, noise), z, noise).estimate;
  EXPECT_LT((e.position - z).norm(), 1e-6);
  EXPECT_LT(e.velocity.norm(), 1e-5);
}

TEST(KfCovariance, SymmetricPsdOverManyCycles) {
  const KalmanNoise noise;
  PenEstimate e;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dt(1e-3, 0.1);
  std::normal_distribution<double> z(0.0, 0.01);
  double worst_asym = 0.0, min_eig = 1.0;
  for (int k = 0; k < 100000; ++k) {
    e = kf_predict(e, dt(rng), noise);
    e = kf_update(e, Vec2(0.15 + z(rng), 0.15 + z(rng)), noise).estimate;
    if (k % 97 == 0) {
      worst_asym = std::max(worst_asym, (e.covariance - e.covariance.transpose()).cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Mat4> es(e.covariance);
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
  }
  EXPECT_EQ(worst_asym, 0.0);
  EXPECT_GE(min_eig, 0.0);
}

TEST(PredictHorizon, ZeroVelocityRepeatsPosition) {
  const auto h = predict_horizon(moving(Vec2(0.1, 0.2), Vec2::Zero()), 10, 0.02);
  ASSERT_EQ(h.size(), 10u);
  for (const Vec2& p : h) EXPECT_EQ(p, Vec2(0.1, 0.2));
}

TEST(PredictHorizon, EqualsChainedPredictions) {
  const KalmanNoise noise;
  PenEstimate e = moving(Vec2(0.1, 0.2), Vec2(0.03, 0.07));
  const auto h = predict_horizon(e, 10, 0.02);
  for (int k = 0; k < 10; ++k) {
    e = kf_predict(e, 0.02, noise);
    EXPECT_EQ(h[k], e.position);
    EXPECT_NEAR((h[k] - (Vec2(0.1, 0.2) + (k + 1) * 0.02 * Vec2(0.03, 0.07))).norm(), 0.0, 1e-15);
  }
}

TEST(PenTracker, InitializesOnFirstSampleAndIsDeterministic) {
  PenTracker a, b;
  EXPECT_FALSE(a.initialized());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int k = 0; k < 50; ++k) {
    const Vec2 z(0.1 + n(rng), 0.1 + n(rng));
    a.observe(0.02 * k, z);
    b.observe(0.02 * k, z);
  }
  EXPECT_TRUE(a.initialized());
  EXPECT_EQ(a.estimate().position, b.estimate().position);
  EXPECT_EQ(a.estimate().covariance, b.estimate().covariance);
  a.reset();
  EXPECT_FALSE(a.initialized());
}
