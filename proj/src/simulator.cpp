#include "emguide/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <stdexcept>

#include "emguide/em_model.hpp"

namespace emguide::sim {

namespace {

constexpr std::uint64_t kSpeedStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStageStream = 0xbf58476d1ce4e5b9ULL;
constexpr std::uint64_t kSensorStream = 0x94d049bb133111ebULL;

double clamp_abs(double v, double limit) { return std::clamp(v, -limit, limit); }

}  // namespace

void PenModel::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("pen mass must be > 0");
  if (!(damping >= 0.0)) throw std::invalid_argument("pen damping must be >= 0");
}

void UserModel::validate() const {
  if (!(intent_gain >= 0.0)) throw std::invalid_argument("intent_gain must be >= 0");
  if (!(speed > 0.0)) throw std::invalid_argument("user speed must be > 0");
  if (!(speed_jitter >= 0.0 && speed_jitter < 1.0)) {
    throw std::invalid_argument("speed_jitter must be in [0, 1)");
  }
  if (!(pause_at >= 0.0 && pause_at <= 1.0)) throw std::invalid_argument("pause_at must be in [0, 1]");
  if (!(pause_duration >= 0.0)) throw std::invalid_argument("pause_duration must be >= 0");
  if (!(noise_std >= 0.0 && wander_std >= 0.0)) throw std::invalid_argument("noise must be >= 0");
  if (!(wander_tau > 0.0)) throw std::invalid_argument("wander_tau must be > 0");
  if (!(compliance >= 0.0 && compliance <= 1.0)) {
    throw std::invalid_argument("compliance must be in [0, 1]");
  }
}

SpeedProfile::SpeedProfile(const UserModel& user, double path_length)
    : length_(path_length), pause_duration_(user.pause_duration) {
  std::mt19937_64 rng(user.seed ^ kSpeedStream);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  speed_ = user.speed * (1.0 + user.speed_jitter * jitter(rng));
  pause_start_ = user.pause_at * path_length / speed_;
}

double SpeedProfile::rate(double t) const {
  if (t < 0.0 || progress(t) >= length_) return 0.0;
  if (t >= pause_start_ && t < pause_end()) return 0.0;
  return speed_;
}

double SpeedProfile::progress(double t) const {
  if (t <= 0.0) return 0.0;
  double moving = std::min(t, pause_start_);
  if (t > pause_end()) moving += t - pause_end();
  return std::min(speed_ * moving, length_);
}

double SpeedProfile::finish_time() const {
  const double travel = length_ / speed_;
  return travel > pause_start_ ? travel + pause_duration_ : travel;
}

User::User(const UserModel& model, const ReferencePath& path)
    : model_(model), path_(path), profile_(model, path.length()), rng_(model.seed) {}

void User::draw(double dt) {
  const double decay = std::exp(-dt / model_.wander_tau);
  const double spread = model_.wander_std * std::sqrt(1.0 - decay * decay);
  for (int i = 0; i < 2; ++i) wander_[i] = decay * wander_[i] + spread * normal_(rng_);
  for (int i = 0; i < 2; ++i) noise_[i] = model_.noise_std * normal_(rng_);
}

Vec2 User::target(double t) const { return path_.evaluate(profile_.progress(t)) + wander_; }

Vec2 User::force(const Vec2& pos, double t) const {
  return model_.intent_gain * (target(t) + noise_ - pos);
}

PenModel pen_step(const PenModel& pen, const Vec2& user_force, double compliance,
                  const Vec2& em_force, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pen_step: dt must be > 0");
  PenModel out = pen;
  const Vec2 acc = (user_force + compliance * em_force - pen.damping * pen.velocity) / pen.mass;
  out.velocity = pen.velocity + acc * dt;
  out.position = pen.position + out.velocity * dt;
  return out;
}

void StageModel::apply_acceleration(const Vec2& acc, double dt) {
  position += velocity * dt;
  for (int i = 0; i < 2; ++i) {
    velocity[i] = clamp_abs(velocity[i] + clamp_abs(acc[i], max_acc) * dt, max_speed);
  }
}

void StageModel::track_position(const Vec2& target, double dt) {
  // Position lands at pos + vel·dt, so steer the velocity held over the
  // following step toward what is needed to arrive one step later while
  // still being able to brake in time.
  Vec2 acc;
  const Vec2 next = position + velocity * dt;
  for (int i = 0; i < 2; ++i) {
    const double err = target[i] - next[i];
    const double brake = std::sqrt(2.0 * max_acc * std::abs(err));
    const double wanted = std::copysign(std::min({std::abs(err) / dt, brake, max_speed}), err);
    acc[i] = (wanted - velocity[i]) / dt;
  }
  apply_acceleration(acc, dt);
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Mpcc: return "mpcc";
    case ControllerKind::Mpc: return "mpc";
    case ControllerKind::OpenLoop: return "open_loop";
    case ControllerKind::None: return "none";
  }
  return "none";
}

ControllerKind controller_from_string(const std::string& name) {
  if (name == "mpcc") return ControllerKind::Mpcc;
  if (name == "mpc") return ControllerKind::Mpc;
  if (name == "open_loop") return ControllerKind::OpenLoop;
  if (name == "none") return ControllerKind::None;
  throw std::invalid_argument("unknown controller '" + name + "'");
}

void SimConfig::validate() const {
  controller.validate();
  pen.validate();
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (decimation < 1) throw std::invalid_argument("decimation must be >= 1");
  if (!(timeout > 0.0)) throw std::invalid_argument("timeout must be > 0");
  if (!(tail >= 0.0)) throw std::invalid_argument("tail must be >= 0");
  if (!(sensor_noise_std >= 0.0 && stage.dispersion_std >= 0.0)) {
    throw std::invalid_argument("noise levels must be >= 0");
  }
}

std::vector<Vec2> Trace::pen_positions() const {
  std::vector<Vec2> out;
  out.reserve(rows.size());
  for (const TraceRow& r : rows) out.push_back(r.pen);
  return out;
}

const std::vector<std::string>& Trace::csv_columns() {
  static const std::vector<std::string> cols = {
      "t", "pen_x", "pen_y", "magnet_x", "magnet_y", "alpha", "theta", "setpoint_x",
      "setpoint_y", "force_x", "force_y", "user_progress", "cost_force", "cost_distance",
      "cost_intensity", "cost_lag", "cost_contour", "cost_progress", "cost_progress_rate",
      "cost_input", "cost", "iterations", "converged"};
  return cols;
}

void Trace::write_csv(std::ostream& os) const {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    os << buf << ',';
  };
  for (const TraceRow& r : rows) {
    num(r.t);
    num(r.pen.x());
    num(r.pen.y());
    num(r.magnet.x());
    num(r.magnet.y());
    num(r.alpha);
    num(r.theta);
    num(r.setpoint.x());
    num(r.setpoint.y());
    num(r.force.x());
    num(r.force.y());
    num(r.user_progress);
    num(r.terms.force);
    num(r.terms.distance);
    num(r.terms.intensity);
    num(r.terms.lag);
    num(r.terms.contour);
    num(r.terms.progress);
    num(r.terms.progress_rate);
    num(r.terms.input);
    num(r.cost);
    os << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

Trace run_experiment(ControllerKind kind, const ReferencePath& path, const UserModel& user_in,
                     const SimConfig& config, std::uint64_t seed) {
  config.validate();
  UserModel user_model = user_in;
  user_model.seed = seed;
  user_model.validate();

  const mpcc::ControllerConfig& cc = config.controller;
  const double dt = cc.solver.dt;
  const double length = path.length();
  const double h = dt / config.substeps;

  Trace trace;
  trace.controller = kind;
  trace.seed = seed;
  trace.dt = dt;

  User user(user_model, path);
  PenModel pen = config.pen;
  pen.position = path.evaluate(0.0);
  pen.velocity.setZero();
  StageModel stage = config.stage;
  stage.max_speed = cc.constraints.max_speed;
  stage.max_acc = cc.constraints.max_acc;
  stage.position = pen.position;
  stage.velocity.setZero();

  std::mt19937_64 stage_rng(seed ^ kStageStream);
  std::mt19937_64 sensor_rng(seed ^ kSensorStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  PenTracker tracker(config.kalman);
  std::unique_ptr<mpcc::Controller> controller;
  if (kind == ControllerKind::Mpcc || kind == ControllerKind::Mpc) {
    controller = std::make_unique<mpcc::Controller>(
        cc, kind == ControllerKind::Mpcc ? mpcc::Controller::Mode::Mpcc
                                         : mpcc::Controller::Mode::Mpc);
  }

  const Vec2 centre = 0.5 * (cc.constraints.workspace_min + cc.constraints.workspace_max);
  const Vec2 half = cc.constraints.workspace_max - cc.constraints.workspace_min;  // 2× box half-size

  double alpha = 0.0;
  double theta = 0.0;
  mpcc::SolveResult plan;
  int plan_index = 0;
  const double end_time = user.profile().finish_time() + config.tail;

  for (long step = 0;; ++step) {
    const double t = step * dt;
    if (t >= end_time - 1e-12) break;
    if (t > config.timeout) {
      trace.timed_out = true;
      break;
    }

    Vec2 measurement = pen.position;
    if (config.sensor_noise_std > 0.0) {
      for (int i = 0; i < 2; ++i) measurement[i] += config.sensor_noise_std * normal(sensor_rng);
    }
    tracker.observe(t, measurement);
    user.draw(dt);

    TraceRow row;
    const Vec2 magnet_start = stage.position;
    const double alpha_start = alpha;
    double alpha_next = alpha;
    double theta_next = theta;

    switch (kind) {
      case ControllerKind::Mpcc:
      case ControllerKind::Mpc: {
        if (step % config.decimation == 0) {
          mpcc::SystemState x0;
          x0.magnet_pos = stage.position;
          x0.magnet_vel = stage.velocity;
          x0.alpha = alpha;
          x0.theta = theta;
          plan = controller->step(x0, tracker.estimate(), path, t);
          plan_index = 0;
          trace.solve_times_ms.push_back(plan.solve_time_ms);
          row.terms = plan.weighted_terms;
          row.cost = plan.cost;
          row.iterations = plan.iterations;
          row.converged = plan.converged;
        }
        const int idx = std::min<int>(plan_index, int(plan.inputs.size()) - 1);
        const mpcc::ControlInput& u = plan.inputs[std::size_t(idx)];
        ++plan_index;
        alpha_next = std::clamp(alpha + u.alpha_rate * dt, 0.0, 1.0);
        theta_next = std::clamp(theta + u.theta_rate * dt, 0.0, length);
        stage.apply_acceleration(u.magnet_acc, dt);
        break;
      }
      case ControllerKind::OpenLoop: {
        const mpcc::OpenLoopCommand cmd = mpcc::open_loop_step(t + dt, path, cc.ref_speed);
        alpha_next = cmd.alpha;
        theta_next = cmd.theta;
        stage.track_position(cmd.magnet_pos, dt);
        break;
      }
      case ControllerKind::None:
        alpha_next = 0.0;
        stage.apply_acceleration(Vec2::Zero(), dt);
        break;
    }

    Vec2 dispersion = Vec2::Zero();
    if (config.stage.dispersion_std > 0.0) {
      for (int i = 0; i < 2; ++i) dispersion[i] = config.stage.dispersion_std * normal(stage_rng);
    }

    Vec2 force_sum = Vec2::Zero();
    for (int s = 0; s < config.substeps; ++s) {
      const double frac = (s + 0.5) / config.substeps;
      const Vec2 magnet = magnet_start + frac * (stage.position - magnet_start) + dispersion;
      const double a = alpha_start + frac * (alpha_next - alpha_start);
      const Vec2 em = em::planar_force(pen.position, magnet, a, cc.em).in_plane;
      force_sum += em;
      pen = pen_step(pen, user.force(pen.position, t + s * h), user_model.compliance, em, h);
    }

    alpha = alpha_next;
    theta = kind == ControllerKind::None ? path.closest_progress(pen.position, theta) : theta_next;

    row.t = t + dt;
    row.pen = pen.position;
    row.magnet = stage.position;
    row.alpha = alpha;
    row.theta = theta;
    row.setpoint = path.evaluate(theta);
    row.force = force_sum / config.substeps;
    row.user_progress = user.progress(t + dt);
    trace.rows.push_back(row);

    if (!pen.position.allFinite() ||
        ((pen.position - centre).cwiseAbs().array() > half.array()).any()) {
      trace.diverged = true;
      break;
    }
  }
  return trace;
}

}  // namespace emguide::sim
