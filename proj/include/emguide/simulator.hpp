#pragma once

// Deterministic stand-in for the stage, the electromagnet and the person
// holding the pen.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "emguide/estimation.hpp"
#include "emguide/mpcc.hpp"
#include "emguide/reference_path.hpp"

namespace emguide::sim {

struct PenModel {
  double mass = 0.02;    // kg
  double damping = 1.0;  // N·s/m
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();

  void validate() const;
};

/// Simulated user. The intent target runs along the path on the user's own
/// clock; a slowly drifting offset (Ornstein-Uhlenbeck) models the hand's
/// wander around the line they are trying to trace.
struct UserModel {
  double intent_gain = 25.0;  // N/m
  double speed = 0.1;         // nominal progress rate (m/s)
  double speed_jitter = 0.3;  // per-seed relative speed spread, uniform ±
  double pause_at = 0.5;      // fraction of L where the user stops
  double pause_duration = 1.0;  // s
  double noise_std = 0.5e-3;  // m, force noise expressed as a position error
  double wander_std = 3.5e-3; // m, stationary std of the drift
  double wander_tau = 0.45;   // s, drift correlation time
  double compliance = 1.0;    // share of the EM force the user lets through
  std::uint64_t seed = 1;

  void validate() const;
};

/// Time → progress rate for one user realization: constant speed with a
/// single pause. Speed is drawn once from the seed.
class SpeedProfile {
 public:
  SpeedProfile(const UserModel& user, double path_length);
  double rate(double t) const;
  double progress(double t) const;  // ∫ rate, capped at L
  double speed() const { return speed_; }
  double pause_start() const { return pause_start_; }
  double pause_end() const { return pause_start_ + pause_duration_; }
  double finish_time() const;

 private:
  double length_;
  double speed_;
  double pause_start_;
  double pause_duration_;
};

/// Per-run user state: RNG stream, drift and noise. Times are absolute.
class User {
 public:
  User(const UserModel& model, const ReferencePath& path);

  /// Draws the random quantities held over the next step of length dt.
  void draw(double dt);
  /// Hand force at pen position `pos` at time t.
  Vec2 force(const Vec2& pos, double t) const;
  /// Point the user is aiming at (path point at their progress plus drift).
  Vec2 target(double t) const;

  double progress(double t) const { return profile_.progress(t); }
  bool finished(double t) const { return profile_.progress(t) >= path_.length(); }
  const UserModel& model() const { return model_; }
  const SpeedProfile& profile() const { return profile_; }
  const Vec2& wander() const { return wander_; }

 private:
  UserModel model_;
  const ReferencePath& path_;
  SpeedProfile profile_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Vec2 wander_ = Vec2::Zero();
  Vec2 noise_ = Vec2::Zero();
};

/// Semi-implicit Euler: v += (user + compliance·em − b·v)/m·dt; p += v·dt.
PenModel pen_step(const PenModel& pen, const Vec2& user_force, double compliance,
                  const Vec2& em_force, double dt);

/// XY stage with per-axis speed and acceleration saturation.
struct StageModel {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double max_speed = 0.25;
  double max_acc = 2.5;
  double dispersion_std = 0.0;  // m, positioning scatter of the magnet

  /// pos += vel·dt; vel += sat(acc)·dt with vel saturated.
  void apply_acceleration(const Vec2& acc, double dt);
  /// Drives toward `target` without overshoot within the limits.
  void track_position(const Vec2& target, double dt);
};

enum class ControllerKind { Mpcc, Mpc, OpenLoop, None };

std::string to_string(ControllerKind kind);
ControllerKind controller_from_string(const std::string& name);

struct SimConfig {
  mpcc::ControllerConfig controller;
  PenModel pen;
  StageModel stage;
  KalmanNoise kalman;
  double sensor_noise_std = 0.0;  // m
  int substeps = 10;              // pen integration steps per control step
  int decimation = 1;             // controller runs every n-th control step
  double timeout = 60.0;          // s
  double tail = 0.0;              // s simulated after the user reaches L

  void validate() const;
};

struct TraceRow {
  double t = 0.0;
  Vec2 pen = Vec2::Zero();
  Vec2 magnet = Vec2::Zero();
  double alpha = 0.0;
  double theta = 0.0;
  Vec2 setpoint = Vec2::Zero();
  Vec2 force = Vec2::Zero();
  double user_progress = 0.0;
  mpcc::StageTerms terms;  // weighted horizon breakdown (zero for baselines without a solve)
  double cost = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct Trace {
  ControllerKind controller = ControllerKind::None;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<TraceRow> rows;
  bool diverged = false;
  bool timed_out = false;
  std::vector<double> solve_times_ms;  // not part of the CSV

  std::vector<Vec2> pen_positions() const;
  static const std::vector<std::string>& csv_columns();
  void write_csv(std::ostream& os) const;
};

/// Closed-loop rollout. The pen starts at rest at s(0), the magnet under it.
Trace run_experiment(ControllerKind controller, const ReferencePath& path, const UserModel& user,
                     const SimConfig& config, std::uint64_t seed);

}  // namespace emguide::sim
