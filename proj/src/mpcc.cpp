#include "emguide/mpcc.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "emguide/dense_qp.hpp"

namespace emguide::mpcc {

StateVec SystemState::to_vector() const {
  StateVec v;
  v << magnet_pos, magnet_vel, alpha, theta;
  return v;
}

SystemState SystemState::from_vector(const StateVec& v) {
  SystemState s;
  s.magnet_pos = v.segment<2>(0);
  s.magnet_vel = v.segment<2>(2);
  s.alpha = v[4];
  s.theta = v[5];
  return s;
}

InputVec ControlInput::to_vector() const {
  InputVec v;
  v << magnet_acc, alpha_rate, theta_rate;
  return v;
}

ControlInput ControlInput::from_vector(const InputVec& v) {
  ControlInput u;
  u.magnet_acc = v.segment<2>(0);
  u.alpha_rate = v[2];
  u.theta_rate = v[3];
  return u;
}

void Weights::validate() const {
  for (double w : {w_l, w_c, w_theta, w_theta_dot, w_f, w_d, w_alpha}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
  }
  for (double r : {r_acc, r_alpha_rate, r_theta_rate}) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("input penalties must be > 0");
  }
  if (!(horizon_decay > 0.0 && horizon_decay <= 1.0)) {
    throw std::invalid_argument("horizon_decay must be in (0, 1]");
  }
}

void Constraints::validate() const {
  if (!(workspace_max.array() > workspace_min.array()).all()) {
    throw std::invalid_argument("workspace box is empty");
  }
  if (!(max_speed > 0.0 && max_acc > 0.0 && alpha_rate_max > 0.0 && theta_rate_max > 0.0)) {
    throw std::invalid_argument("rate bounds must be > 0");
  }
  if (!(alpha_min >= 0.0 && alpha_max <= 1.0 && alpha_min < alpha_max)) {
    throw std::invalid_argument("alpha bounds must satisfy 0 <= min < max <= 1");
  }
}

bool Constraints::contains(const SystemState& x, double path_length, double tol) const {
  for (int i = 0; i < 2; ++i) {
    if (x.magnet_pos[i] < workspace_min[i] - tol || x.magnet_pos[i] > workspace_max[i] + tol) return false;
    if (std::abs(x.magnet_vel[i]) > max_speed + tol) return false;
  }
  return x.alpha >= alpha_min - tol && x.alpha <= alpha_max + tol && x.theta >= -tol &&
         x.theta <= path_length + tol;
}

bool Constraints::admits(const ControlInput& u, bool progress_free, double tol) const {
  if ((u.magnet_acc.cwiseAbs().array() > max_acc + tol).any()) return false;
  if (std::abs(u.alpha_rate) > alpha_rate_max + tol) return false;
  if (!progress_free) return u.theta_rate >= -tol;
  return u.theta_rate >= -tol && u.theta_rate <= theta_rate_max + tol;
}

void ControllerConfig::validate() const {
  weights.validate();
  constraints.validate();
  em.validate();
  if (solver.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(solver.dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (solver.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(scaling.length > 0.0 && scaling.speed > 0.0 && scaling.accel > 0.0 &&
        scaling.alpha_rate > 0.0)) {
    throw std::invalid_argument("cost scales must be > 0");
  }
  if (!(ref_speed >= 0.0)) throw std::invalid_argument("ref_speed must be >= 0");
}

double ControllerConfig::stiffness() const {
  return stiffness_c > 0.0 ? stiffness_c : em::default_stiffness(em);
}

double ControllerConfig::force_scale() const {
  return scaling.force > 0.0 ? scaling.force : em::force_constant(em);
}

StageTerms& StageTerms::operator+=(const StageTerms& o) {
  force += o.force;
  distance += o.distance;
  intensity += o.intensity;
  lag += o.lag;
  contour += o.contour;
  progress += o.progress;
  progress_rate += o.progress_rate;
  input += o.input;
  return *this;
}

StageTerms StageTerms::scaled(double s) const {
  StageTerms t = *this;
  t.force *= s;
  t.distance *= s;
  t.intensity *= s;
  t.lag *= s;
  t.contour *= s;
  t.progress *= s;
  t.progress_rate *= s;
  t.input *= s;
  return t;
}

SystemState dynamics_step(const SystemState& x, const ControlInput& u, double dt) {
  SystemState n;
  n.magnet_pos = x.magnet_pos + x.magnet_vel * dt;
  n.magnet_vel = x.magnet_vel + u.magnet_acc * dt;
  n.alpha = x.alpha + u.alpha_rate * dt;
  n.theta = x.theta + u.theta_rate * dt;
  return n;
}

LagContour lag_contour_errors(const Vec2& pen, double theta, const ReferencePath& path) {
  const PathSample s = path.sample(theta);
  const Vec2 r = s.point - pen;
  const double along = r.dot(s.tangent);
  return {along * along, (r - along * s.tangent).squaredNorm()};
}

StageCost::StageCost(const ReferencePath& path, const ControllerConfig& config)
    : path_(path),
      config_(config),
      f0_(em::force_constant(config.em)),
      c_(config.stiffness()),
      force_scale_(config.force_scale()) {}

// Residual layout:
//   0-1 force mismatch, 2-3 magnet offset, 4 intensity, 5 lag, 6-7 contour,
//   8 progress rate, 9-10 acceleration, 11 alpha rate, 12 theta rate.
StageCost::Residuals StageCost::residuals(const SystemState& x, const ControlInput& u,
                                          const Vec2& pen, double prev_theta_rate,
                                          bool include_input) const {
  const Weights& w = config_.weights;
  const CostScaling& sc = config_.scaling;
  Residuals out;
  out.r.setZero();
  out.jx.setZero();
  out.ju.setZero();
  out.jprev.setZero();
  out.linear_x.setZero();

  const PathSample ps = path_.sample(x.theta);
  // Beyond [0, L] the setpoint is frozen at the endpoint.
  const Vec2 n = ps.tangent;
  const Vec2 dn = ps.clamped ? Vec2::Zero() : ps.tangent_rate;
  const Vec2 ds = ps.clamped ? Vec2::Zero() : n;
  const Vec2 r_theta = ps.point - pen;
  const Vec2 delta = x.magnet_pos - pen;

  // Force mismatch (F_theta − F_a) / force_scale.
  {
    const double k = std::sqrt(w.w_f) / force_scale_;
    const Vec2 fa_unit = em::actuation_force_offset(delta, 1.0, config_.em);
    const Vec2 fd = em::desired_force(r_theta, c_, config_.em);
    const Vec2 mismatch = fd - x.alpha * fa_unit;
    out.r.segment<2>(0) = k * mismatch;
    out.jx.block<2, 2>(0, 0) = -k * em::actuation_force_offset_jacobian(delta, x.alpha, config_.em);
    out.jx.block<2, 1>(0, 4) = -k * fa_unit;
    out.jx.block<2, 1>(0, 5) = k * c_ * f0_ * ds;
    out.terms.force = mismatch.squaredNorm() / (force_scale_ * force_scale_);
  }
  // Proximity d².
  {
    const double k = std::sqrt(w.w_d) / sc.length;
    out.r.segment<2>(2) = k * delta;
    out.jx.block<2, 2>(2, 0) = k * Eigen::Matrix2d::Identity();
    out.terms.distance = delta.squaredNorm() / (sc.length * sc.length);
  }
  // Intensity α².
  {
    const double k = std::sqrt(w.w_alpha);
    out.r[4] = k * x.alpha;
    out.jx(4, 4) = k;
    out.terms.intensity = x.alpha * x.alpha;
  }
  // Lag and contour.
  {
    const double along = r_theta.dot(n);
    const double d_along = r_theta.dot(dn) + ds.dot(n);
    const Vec2 contour = r_theta - along * n;
    const Vec2 d_contour = ds - d_along * n - along * dn;
    const double kl = std::sqrt(w.w_l) / sc.length;
    const double kc = std::sqrt(w.w_c) / sc.length;
    out.r[5] = kl * along;
    out.jx(5, 5) = kl * d_along;
    out.r.segment<2>(6) = kc * contour;
    out.jx.block<2, 1>(6, 5) = kc * d_contour;
    out.terms.lag = along * along / (sc.length * sc.length);
    out.terms.contour = contour.squaredNorm() / (sc.length * sc.length);
  }
  // Progress reward −θ.
  out.linear_x[5] = -w.w_theta / sc.length;
  out.terms.progress = -x.theta / sc.length;

  if (include_input) {
    const double kr = std::sqrt(w.w_theta_dot) / sc.speed;
    out.r[8] = kr * (u.theta_rate - prev_theta_rate);
    out.ju(8, 3) = kr;
    out.jprev[8] = -kr;
    out.terms.progress_rate = std::pow((u.theta_rate - prev_theta_rate) / sc.speed, 2);

    const double ka = std::sqrt(w.r_acc) / sc.accel;
    const double kal = std::sqrt(w.r_alpha_rate) / sc.alpha_rate;
    const double kth = std::sqrt(w.r_theta_rate) / sc.speed;
    out.r.segment<2>(9) = ka * u.magnet_acc;
    out.ju(9, 0) = ka;
    out.ju(10, 1) = ka;
    out.r[11] = kal * u.alpha_rate;
    out.ju(11, 2) = kal;
    out.r[12] = kth * u.theta_rate;
    out.ju(12, 3) = kth;
    out.terms.input = out.r.segment<4>(9).squaredNorm();
  }
  return out;
}

StageEvaluation StageCost::evaluate(const SystemState& x, const ControlInput& u, const Vec2& pen,
                                    double prev_theta_rate, bool include_input,
                                    bool with_gradient) const {
  const Residuals res = residuals(x, u, pen, prev_theta_rate, include_input);
  StageEvaluation ev;
  ev.terms = res.terms;
  ev.value = res.r.squaredNorm() + res.linear_x.dot(x.to_vector());
  if (with_gradient) {
    ev.grad_x = 2.0 * res.jx.transpose() * res.r + res.linear_x;
    ev.grad_u = 2.0 * res.ju.transpose() * res.r;
    ev.grad_prev_theta_rate = 2.0 * res.jprev.dot(res.r);
  }
  return ev;
}

double stage_cost(const SystemState& x, const ControlInput& u, const Vec2& pen_pred,
                  double prev_theta_rate, const ReferencePath& path,
                  const ControllerConfig& config) {
  return StageCost(path, config).evaluate(x, u, pen_pred, prev_theta_rate, true, false).value;
}

namespace {

using Clock = std::chrono::steady_clock;

// Horizon problem in terms of the scaled free inputs z. Inputs that are not
// free (θ̇ in the clocked variant) take fixed values.
class Horizon {
 public:
  Horizon(const SystemState& x0, const std::vector<Vec2>& pens, const ReferencePath& path,
          const ControllerConfig& config, double prev_theta_rate,
          const std::vector<double>* fixed_theta_rate)
      : x0_(x0),
        pens_(pens),
        path_(path),
        config_(config),
        cost_(path, config),
        n_(config.solver.horizon),
        dt_(config.solver.dt),
        prev_theta_rate_(prev_theta_rate) {
    const Constraints& c = config.constraints;
    scale_ = {c.max_acc, c.max_acc, c.alpha_rate_max, c.theta_rate_max};
    progress_free_ = fixed_theta_rate == nullptr;
    if (!progress_free_) fixed_theta_rate_ = *fixed_theta_rate;
    const int per_stage = progress_free_ ? 4 : 3;
    nz_ = per_stage * n_;
    index_.assign(static_cast<std::size_t>(n_), {-1, -1, -1, -1});
    for (int k = 0; k < n_; ++k) {
      for (int i = 0; i < per_stage; ++i) index_[std::size_t(k)][std::size_t(i)] = k * per_stage + i;
    }
    lb_ = Eigen::VectorXd(nz_);
    ub_ = Eigen::VectorXd(nz_);
    for (int k = 0; k < n_; ++k) {
      for (int i = 0; i < per_stage; ++i) {
        const int j = index_[std::size_t(k)][std::size_t(i)];
        lb_[j] = i == 3 ? 0.0 : -1.0;
        ub_[j] = 1.0;
      }
    }
    build_sensitivities();
  }

  int nz() const { return nz_; }
  const Eigen::VectorXd& lb() const { return lb_; }
  const Eigen::VectorXd& ub() const { return ub_; }

  ControlInput input(const Eigen::VectorXd& z, int k) const {
    InputVec v;
    for (int i = 0; i < 4; ++i) {
      const int j = index_[std::size_t(k)][std::size_t(i)];
      v[i] = j >= 0 ? scale_[std::size_t(i)] * z[j] : fixed_theta_rate_[std::size_t(k)];
    }
    return ControlInput::from_vector(v);
  }

  Eigen::VectorXd to_z(const std::vector<ControlInput>& inputs) const {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(nz_);
    for (int k = 0; k < n_ && k < int(inputs.size()); ++k) {
      const InputVec v = inputs[std::size_t(k)].to_vector();
      for (int i = 0; i < 4; ++i) {
        const int j = index_[std::size_t(k)][std::size_t(i)];
        if (j >= 0) z[j] = std::clamp(v[i] / scale_[std::size_t(i)], lb_[j], ub_[j]);
      }
    }
    return z;
  }

  // F_a is bilinear in (alpha, offset), so alpha = 0 with the magnet on the
  // pen is a stationary point of the force term. Start with a small ramp
  // instead when the guess keeps the magnet off for the whole horizon.
  void seed_intensity(Eigen::VectorXd& z) const {
    constexpr double kSeed = 0.1;
    const int j = index_[0][2];
    if (j < 0) return;
    const std::vector<SystemState> xs = rollout(z);
    double peak = 0.0;
    for (const SystemState& x : xs) peak = std::max(peak, x.alpha);
    if (peak >= 0.5 * kSeed) return;
    // With θ scheduled and no force demanded anywhere along the guess, α = 0
    // is the optimum rather than a saddle.
    if (!progress_free_) {
      bool demand = false;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        demand = demand || (path_.evaluate(xs[k].theta) - pens_[k]).norm() > 1e-6;
      }
      if (!demand) return;
    }
    const double target = std::min(kSeed, config_.constraints.alpha_max);
    z[j] = std::clamp((target - x0_.alpha) / (dt_ * scale_[2]), lb_[j], ub_[j]);
  }

  std::vector<SystemState> rollout(const Eigen::VectorXd& z) const {
    std::vector<SystemState> xs;
    xs.reserve(std::size_t(n_) + 1);
    xs.push_back(x0_);
    for (int k = 0; k < n_; ++k) xs.push_back(dynamics_step(xs.back(), input(z, k), dt_));
    return xs;
  }

  double prev_rate(const Eigen::VectorXd& z, int k) const {
    return k == 0 ? prev_theta_rate_ : input(z, k - 1).theta_rate;
  }

  double weight(int k) const { return std::pow(config_.weights.horizon_decay, k); }

  double objective(const Eigen::VectorXd& z) const {
    const std::vector<SystemState> xs = rollout(z);
    double f = 0.0;
    for (int k = 0; k <= n_; ++k) {
      const bool has_input = k < n_;
      const ControlInput u = has_input ? input(z, k) : ControlInput{};
      f += weight(k) * cost_.evaluate(xs[std::size_t(k)], u, pens_[std::size_t(k)],
                                      has_input ? prev_rate(z, k) : 0.0, has_input, false)
                           .value;
    }
    return f;
  }

  // Gauss-Newton model: objective value, gradient and Hessian in z.
  double model(const Eigen::VectorXd& z, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    const std::vector<SystemState> xs = rollout(z);
    grad.setZero(nz_);
    hess.setZero(nz_, nz_);
    Eigen::Matrix<double, StageCost::kResiduals, Eigen::Dynamic> m(StageCost::kResiduals, nz_);
    double f = 0.0;
    for (int k = 0; k <= n_; ++k) {
      const bool has_input = k < n_;
      const ControlInput u = has_input ? input(z, k) : ControlInput{};
      const StageCost::Residuals res =
          cost_.residuals(xs[std::size_t(k)], u, pens_[std::size_t(k)],
                          has_input ? prev_rate(z, k) : 0.0, has_input);
      const double wk = weight(k);
      f += wk * (res.r.squaredNorm() + res.linear_x.dot(xs[std::size_t(k)].to_vector()));
      m.noalias() = res.jx * sens_[std::size_t(k)];
      if (has_input) {
        for (int i = 0; i < 4; ++i) {
          const int j = index_[std::size_t(k)][std::size_t(i)];
          if (j >= 0) m.col(j) += res.ju.col(i) * scale_[std::size_t(i)];
        }
        if (k > 0) {
          const int j = index_[std::size_t(k - 1)][3];
          if (j >= 0) m.col(j) += res.jprev * scale_[3];
        }
      }
      grad.noalias() += wk * (2.0 * m.transpose() * res.r +
                              sens_[std::size_t(k)].transpose() * res.linear_x);
      hess.noalias() += (2.0 * wk) * m.transpose() * m;
    }
    return f;
  }

  // Linear state constraints lo ≤ value(z) + a·Δz ≤ hi, rows normalized.
  void constraint_rows(const Eigen::VectorXd& z, Eigen::MatrixXd& g, Eigen::VectorXd& lo,
                       Eigen::VectorXd& hi) const {
    const std::vector<SystemState> xs = rollout(z);
    const Constraints& c = config_.constraints;
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> los, his;
    auto add = [&](const Eigen::RowVectorXd& a, double value, double l, double h) {
      const double norm = a.norm();
      if (norm < 1e-12) return;
      rows.push_back(a / norm);
      los.push_back((l - value) / norm);
      his.push_back((h - value) / norm);
    };
    for (int k = 1; k <= n_; ++k) {
      const StateVec xv = xs[std::size_t(k)].to_vector();
      const Eigen::MatrixXd& s = sens_[std::size_t(k)];
      for (int i = 0; i < 2; ++i) {
        add(s.row(i), xv[i], c.workspace_min[i], c.workspace_max[i]);
        add(s.row(2 + i), xv[2 + i], -c.max_speed, c.max_speed);
      }
      add(s.row(4), xv[4], c.alpha_min, c.alpha_max);
    }
    if (progress_free_) {
      add(sens_[std::size_t(n_)].row(5), xs.back().theta, -std::numeric_limits<double>::infinity(),
          path_.length());
    }
    g.resize(Eigen::Index(rows.size()), nz_);
    lo.resize(Eigen::Index(rows.size()));
    hi.resize(Eigen::Index(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      g.row(Eigen::Index(r)) = rows[r];
      lo[Eigen::Index(r)] = los[r];
      hi[Eigen::Index(r)] = his[r];
    }
  }

  double violation(const Eigen::VectorXd& z) const {
    Eigen::MatrixXd g;
    Eigen::VectorXd lo, hi;
    constraint_rows(z, g, lo, hi);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < lo.size(); ++i) worst = std::max({worst, lo[i], -hi[i]});
    for (Eigen::Index j = 0; j < nz_; ++j) worst = std::max({worst, lb_[j] - z[j], z[j] - ub_[j]});
    return worst;
  }

  void fill_diagnostics(const Eigen::VectorXd& z, SolveResult& out) const {
    out.states = rollout(z);
    out.inputs.clear();
    for (int k = 0; k < n_; ++k) out.inputs.push_back(input(z, k));
    out.pen_prediction = pens_;
    out.stage_terms.clear();
    out.weighted_terms = {};
    out.cost = 0.0;
    const Weights& w = config_.weights;
    for (int k = 0; k <= n_; ++k) {
      const bool has_input = k < n_;
      const StageEvaluation ev = cost_.evaluate(
          out.states[std::size_t(k)], has_input ? out.inputs[std::size_t(k)] : ControlInput{},
          pens_[std::size_t(k)], has_input ? prev_rate(z, k) : 0.0, has_input, false);
      out.stage_terms.push_back(ev.terms);
      StageTerms t = ev.terms;
      t.force *= w.w_f;
      t.distance *= w.w_d;
      t.intensity *= w.w_alpha;
      t.lag *= w.w_l;
      t.contour *= w.w_c;
      t.progress *= w.w_theta;
      t.progress_rate *= w.w_theta_dot;
      out.weighted_terms += t.scaled(weight(k));
      out.cost += weight(k) * ev.value;
    }
  }

 private:
  void build_sensitivities() {
    sens_.assign(std::size_t(n_) + 1, Eigen::MatrixXd::Zero(kStateDim, nz_));
    for (int k = 0; k < n_; ++k) {
      const Eigen::MatrixXd& s = sens_[std::size_t(k)];
      Eigen::MatrixXd next = s;
      next.row(0) += dt_ * s.row(2);
      next.row(1) += dt_ * s.row(3);
      const auto& idx = index_[std::size_t(k)];
      if (idx[0] >= 0) next(2, idx[0]) += dt_ * scale_[0];
      if (idx[1] >= 0) next(3, idx[1]) += dt_ * scale_[1];
      if (idx[2] >= 0) next(4, idx[2]) += dt_ * scale_[2];
      if (idx[3] >= 0) next(5, idx[3]) += dt_ * scale_[3];
      sens_[std::size_t(k) + 1] = next;
    }
  }

  SystemState x0_;
  const std::vector<Vec2>& pens_;
  const ReferencePath& path_;
  const ControllerConfig& config_;
  StageCost cost_;
  int n_;
  double dt_;
  double prev_theta_rate_;
  bool progress_free_ = true;
  std::vector<double> fixed_theta_rate_;
  std::array<double, 4> scale_{};
  int nz_ = 0;
  std::vector<std::array<int, 4>> index_;
  Eigen::VectorXd lb_, ub_;
  std::vector<Eigen::MatrixXd> sens_;
};

// The velocity is also limited so that the first predicted position stays
// inside the workspace; it does not depend on any input.
SystemState project_state(const SystemState& x, const Constraints& c, double length, double dt,
                          bool& changed) {
  SystemState p = x;
  for (int i = 0; i < 2; ++i) {
    p.magnet_pos[i] = std::clamp(x.magnet_pos[i], c.workspace_min[i], c.workspace_max[i]);
    const double lo = std::max(-c.max_speed, (c.workspace_min[i] - p.magnet_pos[i]) / dt);
    const double hi = std::min(c.max_speed, (c.workspace_max[i] - p.magnet_pos[i]) / dt);
    p.magnet_vel[i] = std::clamp(x.magnet_vel[i], lo, hi);
  }
  p.alpha = std::clamp(x.alpha, c.alpha_min, c.alpha_max);
  p.theta = std::clamp(x.theta, 0.0, length);
  changed = !(p == x);
  return p;
}

std::vector<Vec2> pen_track(const PenEstimate& pen, int n, double dt) {
  std::vector<Vec2> pens{pen.position};
  const std::vector<Vec2> ahead = predict_horizon(pen, n, dt);
  pens.insert(pens.end(), ahead.begin(), ahead.end());
  return pens;
}

// Shifted warm start: drop the applied stage and repeat the last one.
std::vector<ControlInput> shifted(const WarmStart* warm, int n) {
  std::vector<ControlInput> out;
  if (warm == nullptr || warm->inputs.empty()) return out;
  for (std::size_t k = 1; k < warm->inputs.size() && int(out.size()) < n; ++k) {
    out.push_back(warm->inputs[k]);
  }
  while (int(out.size()) < n) out.push_back(warm->inputs.back());
  return out;
}

std::vector<ControlInput> braking_inputs(const SystemState& x0, const ControllerConfig& config,
                                         const std::vector<double>* fixed_theta_rate) {
  const double dt = config.solver.dt;
  const double amax = config.constraints.max_acc;
  std::vector<ControlInput> out;
  SystemState x = x0;
  for (int k = 0; k < config.solver.horizon; ++k) {
    ControlInput u;
    for (int i = 0; i < 2; ++i) u.magnet_acc[i] = std::clamp(-x.magnet_vel[i] / dt, -amax, amax);
    u.theta_rate = fixed_theta_rate ? (*fixed_theta_rate)[std::size_t(k)] : 0.0;
    out.push_back(u);
    x = dynamics_step(x, u, dt);
  }
  return out;
}

SolveResult run_sqp(const SystemState& x0_in, const PenEstimate& pen, const ReferencePath& path,
                    const ControllerConfig& config, const WarmStart* warm,
                    const std::vector<double>* fixed_theta_rate) {
  const auto start = Clock::now();
  const SolverOptions& opt = config.solver;
  SolveResult result;

  const SystemState x0 = project_state(x0_in, config.constraints, path.length(), opt.dt, result.x0_projected);
  const std::vector<Vec2> pens = pen_track(pen, opt.horizon, opt.dt);
  const double prev_rate = warm ? warm->prev_theta_rate : 0.0;

  // No room left to progress: hold θ and drop θ̇ from the decision variables.
  std::vector<double> hold;
  if (fixed_theta_rate == nullptr && path.length() - x0.theta <= 1e-9) {
    hold.assign(std::size_t(opt.horizon), 0.0);
    fixed_theta_rate = &hold;
  }

  const Horizon hz(x0, pens, path, config, prev_rate, fixed_theta_rate);
  Eigen::VectorXd z = hz.to_z(shifted(warm, opt.horizon));
  hz.seed_intensity(z);

  qp::Options qopt;
  qopt.max_iterations = opt.qp_max_iterations;
  qopt.tolerance = opt.qp_tolerance;

  // Restore feasibility of the initial guess by a least-change projection.
  if (hz.violation(z) > 1e-9) {
    qp::Problem proj;
    proj.H = Eigen::MatrixXd::Identity(hz.nz(), hz.nz());
    proj.g = Eigen::VectorXd::Zero(hz.nz());
    proj.lb = hz.lb() - z;
    proj.ub = hz.ub() - z;
    hz.constraint_rows(z, proj.G, proj.glb, proj.gub);
    const qp::Result pr = qp::solve(proj, qopt);
    Eigen::VectorXd candidate = (z + pr.x).cwiseMax(hz.lb()).cwiseMin(hz.ub());
    if (hz.violation(candidate) > 1e-7) {
      const Eigen::VectorXd brake = hz.to_z(braking_inputs(x0, config, fixed_theta_rate));
      hz.fill_diagnostics(brake, result);
      result.infeasible = true;
      result.converged = false;
      result.objective_history.push_back(result.cost);
      result.solve_time_ms =
          std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      return result;
    }
    z = candidate;
  }

  Eigen::VectorXd grad(hz.nz());
  Eigen::MatrixXd hess(hz.nz(), hz.nz());
  double f = hz.objective(z);
  result.objective_history.push_back(f);

  // Levenberg-Marquardt damping, adapted from the ratio of actual to
  // predicted decrease.
  double damping = 0.0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    result.iterations = iter + 1;
    hz.model(z, grad, hess);
    const double diag_scale = std::max(1.0, hess.diagonal().maxCoeff());
    hess.diagonal().array() += 1e-9 + damping * diag_scale;

    qp::Problem sub;
    sub.H = hess;
    sub.g = grad;
    sub.lb = hz.lb() - z;
    sub.ub = hz.ub() - z;
    hz.constraint_rows(z, sub.G, sub.glb, sub.gub);
    const qp::Result qr = qp::solve(sub, qopt);
    Eigen::VectorXd step = qr.x;
    // Keep the iterate inside the box exactly.
    step = ((z + step).cwiseMax(hz.lb()).cwiseMin(hz.ub()) - z).eval();

    if (step.lpNorm<Eigen::Infinity>() <= opt.tolerance) {
      result.converged = true;
      break;
    }
    // The QP step's predicted first-order decrease measures stationarity.
    const double slope = grad.dot(step);
    if (-slope <= opt.tolerance * (1.0 + std::abs(f))) {
      result.converged = true;
      break;
    }

    const double predicted = -(slope + 0.5 * step.dot(hess * step));
    double t = 1.0;
    bool accepted = false;
    for (int b = 0; b <= opt.max_backtracks; ++b) {
      const Eigen::VectorXd trial = z + t * step;
      const double ft = hz.objective(trial);
      if (ft <= f + opt.armijo * t * slope && hz.violation(trial) <= 1e-7) {
        const double ratio = b == 0 && predicted > 0.0 ? (f - ft) / predicted : 0.0;
        if (ratio < 0.25) {
          damping = std::max(4.0 * damping, 1e-6);
        } else if (ratio > 0.75) {
          damping = damping < 1e-8 ? 0.0 : 0.25 * damping;
        }
        z = trial;
        f = ft;
        accepted = true;
        break;
      }
      t *= opt.backtrack;
    }
    if (!accepted) {
      result.converged = -slope <= 1e-10 * (1.0 + std::abs(f));
      break;
    }
    result.objective_history.push_back(f);
  }

  hz.fill_diagnostics(z, result);
  result.solve_time_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return result;
}

}  // namespace

SolveResult solve(const SystemState& x0, const PenEstimate& pen, const ReferencePath& path,
                  const ControllerConfig& config, const WarmStart* warm) {
  return run_sqp(x0, pen, path, config, warm, nullptr);
}

SolveResult mpc_step(const SystemState& x0, const PenEstimate& pen, const ReferencePath& path,
                     double ref_speed, double clock_t, const ControllerConfig& config,
                     const WarmStart* warm) {
  if (!(ref_speed >= 0.0)) throw std::invalid_argument("mpc_step: ref_speed must be >= 0");
  const double dt = config.solver.dt;
  const double length = path.length();
  // θ̇ chosen so the rollout lands on the clock schedule.
  std::vector<double> rates;
  double theta = std::clamp(x0.theta, 0.0, length);
  for (int k = 0; k < config.solver.horizon; ++k) {
    const double target = std::min(ref_speed * (clock_t + (k + 1) * dt), length);
    const double rate = std::max(0.0, (target - theta) / dt);
    rates.push_back(rate);
    theta += rate * dt;
  }
  return run_sqp(x0, pen, path, config, warm, &rates);
}

OpenLoopCommand open_loop_step(double t, const ReferencePath& path, double speed) {
  if (!(speed > 0.0)) throw std::invalid_argument("open_loop_step: speed must be > 0");
  OpenLoopCommand cmd;
  cmd.theta = std::clamp(speed * t, 0.0, path.length());
  cmd.magnet_pos = path.evaluate(cmd.theta);
  cmd.alpha = 1.0;
  return cmd;
}

Controller::Controller(ControllerConfig config, Mode mode) : config_(std::move(config)), mode_(mode) {
  config_.validate();
}

SolveResult Controller::step(const SystemState& x0, const PenEstimate& pen,
                             const ReferencePath& path, double clock_t) {
  SolveResult r = mode_ == Mode::Mpcc
                      ? solve(x0, pen, path, config_, &warm_)
                      : mpc_step(x0, pen, path, config_.ref_speed, clock_t, config_, &warm_);
  warm_.inputs = r.inputs;
  warm_.prev_theta_rate = r.inputs.empty() ? 0.0 : r.inputs.front().theta_rate;
  return r;
}

void Controller::reset() { warm_ = {}; }

void Controller::set_weights(const Weights& weights) {
  weights.validate();
  config_.weights = weights;
}

}  // namespace emguide::mpcc
