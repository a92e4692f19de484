#pragma once

#include <vector>

#include <Eigen/Core>

#include "emguide/types.hpp"

namespace emguide {

using Mat4 = Eigen::Matrix4d;

/// Pen position/velocity estimate with state order [px, py, vx, vy].
struct PenEstimate {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Mat4 covariance = Mat4::Identity() * 1e-4;
};

struct KalmanNoise {
  double accel_psd = 0.25;     // white-acceleration spectral density (m/s²)²
  double meas_var = 0.25e-6;   // position measurement variance (m²)
};

struct UpdateOutcome {
  PenEstimate estimate;
  bool rejected = false;
};

/// Constant-velocity propagation. Requires dt > 0.
PenEstimate kf_predict(const PenEstimate& est, double dt, const KalmanNoise& noise);

/// Position measurement update in Joseph form. Non-finite measurements leave
/// the estimate unchanged and set `rejected`. Requires meas_var > 0.
UpdateOutcome kf_update(const PenEstimate& est, const Vec2& measurement,
                        const KalmanNoise& noise);

/// Mean-only extrapolation p + k·dt·v for k = 1..steps.
std::vector<Vec2> predict_horizon(const PenEstimate& est, int steps, double dt);

/// Session-level filter: initializes on first measurement, then
/// predict/update with the elapsed time between samples.
class PenTracker {
 public:
  explicit PenTracker(KalmanNoise noise = {}) : noise_(noise) {}

  /// Returns false when the measurement was rejected.
  bool observe(double t, const Vec2& measurement);

  bool initialized() const { return initialized_; }
  const PenEstimate& estimate() const { return est_; }
  const KalmanNoise& noise() const { return noise_; }
  void reset() { *this = PenTracker(noise_); }

 private:
  KalmanNoise noise_;
  PenEstimate est_;
  double last_t_ = 0.0;
  bool initialized_ = false;
};

}  // namespace emguide
