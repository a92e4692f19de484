#include "emguide/estimation.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>

namespace emguide {

namespace {

Mat4 transition(double dt) {
  Mat4 f = Mat4::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  return f;
}

}  // namespace

PenEstimate kf_predict(const PenEstimate& est, double dt, const KalmanNoise& noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("kf_predict: dt must be > 0");
  const Mat4 f = transition(dt);
  const double q = noise.accel_psd;
  const double dt2 = dt * dt;
  Mat4 qm = Mat4::Zero();
  for (int i = 0; i < 2; ++i) {
    qm(i, i) = q * dt2 * dt / 3.0;
    qm(i, i + 2) = qm(i + 2, i) = q * dt2 / 2.0;
    qm(i + 2, i + 2) = q * dt;
  }
  PenEstimate out;
  out.position = est.position + dt * est.velocity;
  out.velocity = est.velocity;
  out.covariance = f * est.covariance * f.transpose() + qm;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

UpdateOutcome kf_update(const PenEstimate& est, const Vec2& measurement,
                        const KalmanNoise& noise) {
  if (!(noise.meas_var > 0.0)) throw std::invalid_argument("kf_update: meas_var must be > 0");
  if (!measurement.allFinite()) return {est, true};

  Eigen::Matrix<double, 2, 4> hm = Eigen::Matrix<double, 2, 4>::Zero();
  hm(0, 0) = 1.0;
  hm(1, 1) = 1.0;
  const Eigen::Matrix2d r = Eigen::Matrix2d::Identity() * noise.meas_var;
  const Mat4& p = est.covariance;
  const Eigen::Matrix2d s = hm * p * hm.transpose() + r;
  const Eigen::Matrix<double, 4, 2> k = p * hm.transpose() * s.inverse();

  Eigen::Vector4d x;
  x << est.position, est.velocity;
  x += k * (measurement - est.position);

  const Mat4 ikh = Mat4::Identity() - k * hm;
  Mat4 pn = ikh * p * ikh.transpose() + k * r * k.transpose();
  pn = 0.5 * (pn + pn.transpose()).eval();

  UpdateOutcome out;
  out.estimate.position = x.head<2>();
  out.estimate.velocity = x.tail<2>();
  out.estimate.covariance = pn;
  return out;
}

std::vector<Vec2> predict_horizon(const PenEstimate& est, int steps, double dt) {
  if (steps < 1) throw std::invalid_argument("predict_horizon: steps must be >= 1");
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(steps));
  Vec2 p = est.position;
  for (int k = 0; k < steps; ++k) {
    p = p + dt * est.velocity;
    out.push_back(p);
  }
  return out;
}

bool PenTracker::observe(double t, const Vec2& measurement) {
  if (!measurement.allFinite()) return false;
  if (!initialized_) {
    est_.position = measurement;
    est_.velocity.setZero();
    est_.covariance = Mat4::Zero();
    est_.covariance(0, 0) = est_.covariance(1, 1) = noise_.meas_var;
    est_.covariance(2, 2) = est_.covariance(3, 3) = 0.01;  // (0.1 m/s)²
    last_t_ = t;
    initialized_ = true;
    return true;
  }
  const double dt = t - last_t_;
  if (dt > 0.0) est_ = kf_predict(est_, dt, noise_);
  last_t_ = std::max(last_t_, t);
  const UpdateOutcome upd = kf_update(est_, measurement, noise_);
  est_ = upd.estimate;
  return !upd.rejected;
}

}  // namespace emguide
