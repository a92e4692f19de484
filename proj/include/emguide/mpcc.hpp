#pragma once

// Model predictive contouring control for electromagnetic pen guidance.
//
// State x = [magnet position (2), magnet velocity (2), intensity alpha,
// path progress theta]; input u = [magnet acceleration (2), alpha rate,
// theta rate]. Dynamics are forward-Euler integrators, the stage cost
// combines force, proximity, intensity, lag/contour and progress terms, and
// each receding-horizon problem is solved by a feasible-point SQP whose
// subproblems go to a dense interior point QP.

#include <optional>
#include <vector>

#include "emguide/em_model.hpp"
#include "emguide/estimation.hpp"
#include "emguide/reference_path.hpp"
#include "emguide/types.hpp"

namespace emguide::mpcc {

inline constexpr int kStateDim = 6;
inline constexpr int kInputDim = 4;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using InputVec = Eigen::Matrix<double, kInputDim, 1>;

struct SystemState {
  Vec2 magnet_pos = Vec2::Zero();
  Vec2 magnet_vel = Vec2::Zero();
  double alpha = 0.0;
  double theta = 0.0;

  StateVec to_vector() const;
  static SystemState from_vector(const StateVec& v);
  bool operator==(const SystemState&) const = default;
};

struct ControlInput {
  Vec2 magnet_acc = Vec2::Zero();
  double alpha_rate = 0.0;
  double theta_rate = 0.0;

  InputVec to_vector() const;
  static ControlInput from_vector(const InputVec& v);
  bool operator==(const ControlInput&) const = default;
};

struct Weights {
  double w_l = 1.5;
  double w_c = 1.5;
  double w_theta = 10.0;
  double w_theta_dot = 0.1;
  double w_f = 10.0;
  double w_d = 0.05;
  double w_alpha = 7.0;
  double r_acc = 1.0;
  double r_alpha_rate = 1.0;
  double r_theta_rate = 1.0;
  double horizon_decay = 0.9;

  /// Throws std::invalid_argument on negative weights, non-positive input
  /// penalties or decay outside (0, 1].
  void validate() const;
};

struct Constraints {
  Vec2 workspace_min = Vec2(0.0, 0.0);
  Vec2 workspace_max = Vec2(0.30, 0.30);
  double max_speed = 0.25;  // per stage axis (m/s)
  double max_acc = 2.5;     // per stage axis (m/s²)
  double alpha_min = 0.0;
  double alpha_max = 1.0;
  double alpha_rate_max = 10.0;
  double theta_rate_max = 0.25;

  void validate() const;
  bool contains(const SystemState& x, double path_length, double tol = 1e-6) const;
  bool admits(const ControlInput& u, bool progress_free = true, double tol = 1e-6) const;
};

/// Units in which the cost terms are measured. A length error of `length`
/// meters, a force mismatch of `force` newtons, and input magnitudes equal to
/// the rate scales each contribute one weight unit.
struct CostScaling {
  double length = 1e-3;
  double force = 0.0;  // <= 0 selects F0 of the magnet pair
  double speed = 0.25;
  double accel = 2.5;
  double alpha_rate = 10.0;
};

struct SolverOptions {
  int horizon = 10;
  double dt = 0.02;
  int max_iterations = 30;
  double tolerance = 1e-6;  // on the scaled SQP step (∞-norm)
  int qp_max_iterations = 60;
  double qp_tolerance = 1e-10;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
};

struct ControllerConfig {
  Weights weights;
  Constraints constraints;
  CostScaling scaling;
  SolverOptions solver;
  em::EmParams em = em::EmParams::prototype();
  double stiffness_c = 0.0;  // <= 0 selects 5/h
  double ref_speed = 0.1;    // clock speed of the time-dependent baselines (m/s)

  void validate() const;
  double stiffness() const;
  double force_scale() const;
};

/// Unweighted cost terms of one stage (before the horizon decay).
struct StageTerms {
  double force = 0.0;          // C_f
  double distance = 0.0;       // C_d
  double intensity = 0.0;      // C_alpha
  double lag = 0.0;            // C_l
  double contour = 0.0;        // C_c
  double progress = 0.0;       // C_theta
  double progress_rate = 0.0;  // C_theta_dot
  double input = 0.0;          // scaled uᵀRu

  StageTerms& operator+=(const StageTerms& o);
  StageTerms scaled(double s) const;
};

/// Stage-cost evaluation with its gradient.
struct StageEvaluation {
  double value = 0.0;
  StageTerms terms;
  StateVec grad_x = StateVec::Zero();
  InputVec grad_u = InputVec::Zero();
  double grad_prev_theta_rate = 0.0;
};

/// Evaluates J_k(x, u) + uᵀRu with every term measured in `config.scaling`
/// units. `prev_theta_rate` is the previous stage's theta rate used by the
/// smooth-progress term. When `include_input` is false the stage has no
/// input (terminal stage) and the input-dependent terms are skipped.
class StageCost {
 public:
  StageCost(const ReferencePath& path, const ControllerConfig& config);

  StageEvaluation evaluate(const SystemState& x, const ControlInput& u,
                           const Vec2& pen, double prev_theta_rate,
                           bool include_input = true,
                           bool with_gradient = true) const;

  /// Residual form used for the Gauss-Newton model: value = ‖r‖² + lᵀ[x;u]
  /// with Jacobians of r. Dimensions: r ∈ R^kResiduals.
  static constexpr int kResiduals = 13;
  struct Residuals {
    Eigen::Matrix<double, kResiduals, 1> r;
    Eigen::Matrix<double, kResiduals, kStateDim> jx;
    Eigen::Matrix<double, kResiduals, kInputDim> ju;
    Eigen::Matrix<double, kResiduals, 1> jprev;  // w.r.t. prev_theta_rate
    StateVec linear_x;                            // progress term gradient
    StageTerms terms;
  };
  Residuals residuals(const SystemState& x, const ControlInput& u, const Vec2& pen,
                      double prev_theta_rate, bool include_input) const;

  const ControllerConfig& config() const { return config_; }

 private:
  const ReferencePath& path_;
  ControllerConfig config_;
  double f0_;
  double c_;
  double force_scale_;
};

/// Forward-Euler step: pos += vel·dt; vel += acc·dt; alpha += rate·dt;
/// theta += rate·dt. No clamping.
SystemState dynamics_step(const SystemState& x, const ControlInput& u, double dt);

struct LagContour {
  double lag = 0.0;      // ⟨r, n⟩²
  double contour = 0.0;  // ‖r − ⟨r, n⟩ n‖²
};

/// r = s(θ) − pen decomposed along the path tangent at θ.
LagContour lag_contour_errors(const Vec2& pen, double theta, const ReferencePath& path);

/// Scalar stage cost (no gradient).
double stage_cost(const SystemState& x, const ControlInput& u, const Vec2& pen_pred,
                  double prev_theta_rate, const ReferencePath& path,
                  const ControllerConfig& config);

/// Shifted previous solution used to warm-start the next solve.
struct WarmStart {
  std::vector<ControlInput> inputs;  // previous horizon, unshifted
  double prev_theta_rate = 0.0;      // last applied theta rate
};

struct SolveResult {
  std::vector<SystemState> states;   // N + 1
  std::vector<ControlInput> inputs;  // N
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool x0_projected = false;
  bool infeasible = false;  // no feasible horizon found; braking inputs returned
  std::vector<double> objective_history;  // objective of every accepted iterate
  std::vector<StageTerms> stage_terms;    // per stage, unweighted
  StageTerms weighted_terms;              // Σ_k w_k·(weight·term)
  std::vector<Vec2> pen_prediction;       // N + 1
  double solve_time_ms = 0.0;
};

/// MPCC horizon solve with θ as a decision variable.
SolveResult solve(const SystemState& x0, const PenEstimate& pen, const ReferencePath& path,
                  const ControllerConfig& config, const WarmStart* warm = nullptr);

/// Time-dependent baseline: same problem with θ_k = min(ref_speed·(clock_t + k·dt), L)
/// and θ̇ removed from the decision variables.
SolveResult mpc_step(const SystemState& x0, const PenEstimate& pen, const ReferencePath& path,
                     double ref_speed, double clock_t, const ControllerConfig& config,
                     const WarmStart* warm = nullptr);

struct OpenLoopCommand {
  Vec2 magnet_pos = Vec2::Zero();
  double alpha = 1.0;
  double theta = 0.0;
};

/// Pre-timed baseline: the magnet sits at s(min(speed·t, L)) at full strength.
/// Throws std::invalid_argument for speed <= 0.
OpenLoopCommand open_loop_step(double t, const ReferencePath& path, double speed);

/// Receding-horizon wrapper carrying warm start and last applied θ̇ between
/// calls. One instance per session.
class Controller {
 public:
  enum class Mode { Mpcc, Mpc };

  Controller(ControllerConfig config, Mode mode = Mode::Mpcc);

  /// Solves from x0 and returns the result; `clock_t` is only used in Mpc mode.
  SolveResult step(const SystemState& x0, const PenEstimate& pen, const ReferencePath& path,
                   double clock_t = 0.0);

  /// State to feed back as the next x0 when the plant follows the model.
  static SystemState next_state(const SolveResult& result) { return result.states.at(1); }

  void reset();
  void set_weights(const Weights& weights);
  const ControllerConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  double last_theta_rate() const { return warm_.prev_theta_rate; }

 private:
  ControllerConfig config_;
  Mode mode_;
  WarmStart warm_;
};

}  // namespace emguide::mpcc
