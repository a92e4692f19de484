#include <gtest/gtest.h>

#include <random>

#include "emguide/mpcc.hpp"
#include "emguide/paths.hpp"
#include "scenarios.hpp"

using namespace emguide;
using namespace emguide::mpcc;

namespace {

ReferencePath line_path() {
  const std::vector<Vec2> pts{{0.05, 0.15}, {0.25, 0.15}};
  return ReferencePath::build(pts, PathKind::Polyline);
}

ReferencePath shape(const char* generator) {
  PathSpec spec;
  spec.generator = generator;
  return build_path(spec);
}

PenEstimate pen_at(const Vec2& p, const Vec2& v = Vec2::Zero()) {
  PenEstimate e;
  e.position = p;
  e.velocity = v;
  return e;
}

struct Instance {
  SystemState x0;
  PenEstimate pen;
  const ReferencePath* path;
};

Instance random_instance(std::mt19937_64& rng, const ReferencePath& path) {
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
  Instance in;
  in.path = &path;
  const double th = u(rng) * 0.9 * path.length();
  const Vec2 pen = path.evaluate(th) + 0.01 * Vec2(s(rng), s(rng));
  in.pen = pen_at(pen, 0.1 * Vec2(s(rng), s(rng)));
  in.x0.magnet_pos = pen + 0.012 * Vec2(s(rng), s(rng));
  in.x0.magnet_vel = 0.2 * Vec2(s(rng), s(rng));
  in.x0.alpha = u(rng);
  in.x0.theta = std::max(0.0, th + 0.01 * s(rng));
  return in;
}

void check_invariants(const SolveResult& r, const ReferencePath& path, const ControllerConfig& c,
                      bool progress_free) {
  ASSERT_EQ(r.states.size(), std::size_t(c.solver.horizon + 1));
  ASSERT_EQ(r.inputs.size(), std::size_t(c.solver.horizon));
  for (int k = 0; k < c.solver.horizon; ++k) {
    EXPECT_TRUE(c.constraints.admits(r.inputs[k], progress_free, 1e-6)) << "input " << k;
    EXPECT_TRUE(c.constraints.contains(r.states[k + 1], path.length(), 1e-6)) << "state " << k + 1;
    EXPECT_EQ(r.states[k + 1], dynamics_step(r.states[k], r.inputs[k], c.solver.dt)) << "dynamics " << k;
    EXPECT_GE(r.states[k + 1].theta, r.states[k].theta) << "progress " << k;
  }
}

}  // namespace

TEST(Dynamics, ZeroInput) {
  SystemState x;
  x.magnet_pos = Vec2(0.1, 0.2);
  x.magnet_vel = Vec2(0.05, -0.1);
  x.alpha = 0.4;
  x.theta = 0.07;
  const SystemState y = dynamics_step(x, ControlInput{}, 0.02);
  EXPECT_EQ(y.magnet_pos, x.magnet_pos + 0.02 * x.magnet_vel);
  EXPECT_EQ(y.magnet_vel, x.magnet_vel);
  EXPECT_EQ(y.alpha, x.alpha);
  EXPECT_EQ(y.theta, x.theta);
}

TEST(Dynamics, ThetaRateIntegrates) {
  SystemState x;
  ControlInput u;
  u.theta_rate = 0.12;
  for (int k = 0; k < 40; ++k) x = dynamics_step(x, u, 0.02);
  EXPECT_NEAR(x.theta, 40 * 0.02 * 0.12, 1e-14);
}

TEST(Dynamics, ConstantAccelerationClosedForm) {
  SystemState x;
  ControlInput u;
  u.magnet_acc = Vec2(1.5, -0.5);
  const double dt = 0.02;
  const int k = 37;
  for (int i = 0; i < k; ++i) x = dynamics_step(x, u, dt);
  EXPECT_NEAR((x.magnet_vel - k * dt * u.magnet_acc).norm(), 0.0, 1e-13);
  EXPECT_NEAR((x.magnet_pos - dt * dt * u.magnet_acc * (k * (k - 1) / 2.0)).norm(), 0.0, 1e-13);
}

TEST(LagContour, Decomposition) {
  const ReferencePath path = line_path();
  const double th = 0.08;
  const Vec2 s = path.evaluate(th), n = path.tangent(th), perp(-n.y(), n.x());
  LagContour e = lag_contour_errors(s, th, path);
  EXPECT_NEAR(e.lag, 0.0, 1e-20);
  EXPECT_NEAR(e.contour, 0.0, 1e-20);
  const double d = 0.004;
  e = lag_contour_errors(s + d * n, th, path);
  EXPECT_NEAR(e.lag, d * d, 1e-15);
  EXPECT_NEAR(e.contour, 0.0, 1e-15);
  e = lag_contour_errors(s + d * perp, th, path);
  EXPECT_NEAR(e.lag, 0.0, 1e-15);
  EXPECT_NEAR(e.contour, d * d, 1e-15);
}

TEST(StageCost, AllWeightsZeroGivesZero) {
  const ReferencePath path = line_path();
  ControllerConfig c;
  c.weights = Weights{0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0.9};
  SystemState x;
  x.magnet_pos = Vec2(0.1, 0.12);
  x.alpha = 0.5;
  x.theta = 0.05;
  // Input penalties must stay positive, so zero R means zero input.
  EXPECT_EQ(stage_cost(x, ControlInput{}, Vec2(0.09, 0.16), 0.0, path, c), 0.0);
}

TEST(StageCost, OnlyProgressRewardSurvivesAtRest) {
  const ReferencePath path = line_path();
  for (double length_unit : {1.0, 1e-3}) {
    ControllerConfig c;
    c.scaling.length = length_unit;
    SystemState x;
    x.theta = 0.06;
    x.magnet_pos = path.evaluate(x.theta);
    const double cost = stage_cost(x, ControlInput{}, x.magnet_pos, 0.0, path, c);
    EXPECT_NEAR(cost, -c.weights.w_theta * x.theta / length_unit, 1e-12 * std::abs(cost));
  }
}

TEST(StageCost, GradientMatchesCentralDifferences) {
  const ControllerConfig c;
  const ReferencePath path = shape("sinus");
  const StageCost cost(path, c);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
  const double steps[kStateDim + kInputDim] = {1e-7, 1e-7, 1e-6, 1e-6, 1e-6, 1e-7, 1e-5, 1e-5, 1e-5, 1e-6};
  for (int trial = 0; trial < 100; ++trial) {
    const double th = (0.05 + 0.9 * u(rng)) * path.length();
    SystemState x;
    x.theta = th;
    const Vec2 pen = path.evaluate(th + 0.01 * s(rng)) + 0.008 * Vec2(s(rng), s(rng));
    x.magnet_pos = pen + 0.03 * Vec2(s(rng), s(rng));
    x.magnet_vel = 0.2 * Vec2(s(rng), s(rng));
    x.alpha = 0.05 + 0.9 * u(rng);
    ControlInput in;
    in.magnet_acc = 2.0 * Vec2(s(rng), s(rng));
    in.alpha_rate = 5.0 * s(rng);
    in.theta_rate = 0.2 * u(rng);
    const double prev = 0.2 * u(rng);
    const StageEvaluation ev = cost.evaluate(x, in, pen, prev);
    Eigen::Matrix<double, kStateDim + kInputDim, 1> an, fd;
    an << ev.grad_x, ev.grad_u;
    for (int i = 0; i < kStateDim + kInputDim; ++i) {
      auto at = [&](double delta) {
        StateVec xv = x.to_vector();
        InputVec uv = in.to_vector();
        if (i < kStateDim) xv[i] += delta;
        else uv[i - kStateDim] += delta;
        return cost.evaluate(SystemState::from_vector(xv), ControlInput::from_vector(uv), pen, prev, true, false).value;
      };
      fd[i] = (at(steps[i]) - at(-steps[i])) / (2.0 * steps[i]);
    }
    EXPECT_LE((an - fd).norm(), 1e-4 * fd.norm()) << "trial " << trial << "\nan " << an.transpose()
                                                 << "\nfd " << fd.transpose();
    EXPECT_NEAR(ev.value, stage_cost(x, in, pen, prev, path, c), 1e-12 * std::abs(ev.value));
  }
}

TEST(Solve, InvariantsOnRandomInstances) {
  const ControllerConfig c;
  std::mt19937_64 rng(22);
  for (const char* g : {"line", "circle", "sinus"}) {
    const ReferencePath path = shape(g);
    for (int trial = 0; trial < 15; ++trial) {
      const Instance in = random_instance(rng, path);
      const SolveResult r = solve(in.x0, in.pen, path, c);
      check_invariants(r, path, c, true);
      EXPECT_FALSE(r.infeasible);
      const SolveResult m = mpc_step(in.x0, in.pen, path, c.ref_speed, 0.3 * trial, c);
      check_invariants(m, path, c, false);
    }
  }
}

TEST(Solve, ObjectiveNonIncreasingAcrossIterations) {
  const ControllerConfig c;
  std::mt19937_64 rng(23);
  const ReferencePath paths[] = {shape("line"), shape("circle"), shape("sinus"), shape("spiral")};
  int converged = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const ReferencePath& path = paths[trial % 4];
    const Instance in = random_instance(rng, path);
    const SolveResult r = solve(in.x0, in.pen, path, c);
    ASSERT_FALSE(r.objective_history.empty());
    for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
      EXPECT_LE(r.objective_history[i], r.objective_history[i - 1]) << "trial " << trial << " it " << i;
    }
    converged += r.converged;
  }
  EXPECT_GE(converged, 45);
}

TEST(Solve, WarmStartDeterminism) {
  const ControllerConfig c;
  const ReferencePath path = shape("circle");
  std::mt19937_64 rng(24);
  const Instance in = random_instance(rng, path);
  const SolveResult first = solve(in.x0, in.pen, path, c);
  WarmStart warm{first.inputs, first.inputs.front().theta_rate};
  const SolveResult a = solve(first.states[1], in.pen, path, c, &warm);
  const SolveResult b = solve(first.states[1], in.pen, path, c, &warm);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, DegenerateSinglePointPath) {
  const ControllerConfig c;
  const Vec2 p(0.15, 0.15);
  const ReferencePath path = ReferencePath::stationary(p);
  SystemState x0;
  x0.magnet_pos = p;
  const SolveResult r = solve(x0, pen_at(p), path, c);
  for (const ControlInput& u : r.inputs) EXPECT_LE(u.to_vector().cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Solve, ProjectsInfeasibleInitialState) {
  const ControllerConfig c;
  const ReferencePath path = line_path();
  SystemState x0;
  x0.magnet_pos = Vec2(0.35, 0.15);  // outside the workspace
  x0.magnet_vel = Vec2(0.4, 0.0);
  x0.alpha = 1.3;
  const SolveResult r = solve(x0, pen_at(Vec2(0.2, 0.15)), path, c);
  EXPECT_TRUE(r.x0_projected);
  EXPECT_TRUE(c.constraints.contains(r.states[0], path.length()));
  check_invariants(r, path, c, true);
}

TEST(Solve, FinishedPathHoldsProgress) {
  const ControllerConfig c;
  const ReferencePath path = line_path();
  SystemState x0;
  x0.theta = path.length();
  x0.magnet_pos = path.evaluate(path.length());
  const SolveResult r = solve(x0, pen_at(x0.magnet_pos), path, c);
  for (const ControlInput& u : r.inputs) EXPECT_EQ(u.theta_rate, 0.0);
  check_invariants(r, path, c, true);
}

TEST(OpenLoop, EndpointsAndPenIndependence) {
  const ReferencePath path = line_path();
  const double v = 0.08;
  EXPECT_NEAR((open_loop_step(0.0, path, v).magnet_pos - path.evaluate(0.0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((open_loop_step(path.length() / v, path, v).magnet_pos - path.evaluate(path.length())).norm(), 0.0,
              1e-12);
  EXPECT_EQ(open_loop_step(50.0, path, v).theta, path.length());
  EXPECT_EQ(open_loop_step(1.0, path, v).alpha, 1.0);
  EXPECT_THROW(open_loop_step(1.0, path, 0.0), std::invalid_argument);
}

TEST(MpcBaseline, ZeroReferenceSpeedHoldsStart) {
  ControllerConfig c;
  c.ref_speed = 0.0;
  const ReferencePath path = line_path();
  Controller ctl(c, Controller::Mode::Mpc);
  SystemState x;
  x.magnet_pos = path.evaluate(0.0);
  const PenEstimate pen = pen_at(path.evaluate(0.0) + Vec2(0, 0.005));
  for (int k = 0; k < 30; ++k) {
    x = Controller::next_state(ctl.step(x, pen, path, k * 0.02));
    EXPECT_EQ(x.theta, 0.0);
  }
}

TEST(MpcBaseline, SetpointRidesTheClock) {
  const auto run = scenario::stationary_pen(Controller::Mode::Mpc, 60);
  const ControllerConfig c;
  for (std::size_t k = 0; k < run.theta.size(); ++k) {
    EXPECT_NEAR(run.theta[k], c.ref_speed * c.solver.dt * k, 1e-9) << k;
  }
}

TEST(Mpcc, TimeFreeWithStationaryPen) {
  const auto run = scenario::stationary_pen(Controller::Mode::Mpcc, 100);
  EXPECT_LT(scenario::spread(run.theta), 5e-3);
  // The magnet settles between the pen and the path.
  const Vec2 m = run.magnet.back();
  EXPECT_GT(m.y(), 0.15 - 1e-3);
  EXPECT_LT(m.y(), run.pen.y() + 1e-3);
}

TEST(Mpcc, TracksPenMovingAtReferenceSpeedLikeBaseline) {
  const ControllerConfig c;
  const ReferencePath path = scenario::long_line();
  Controller mpcc_ctl(c, Controller::Mode::Mpcc), mpc_ctl(c, Controller::Mode::Mpc);
  SystemState xa, xb;
  xa.magnet_pos = xb.magnet_pos = path.evaluate(0.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double t = k * c.solver.dt;
    const Vec2 p = path.evaluate(c.ref_speed * t);
    const PenEstimate pen = pen_at(p, c.ref_speed * path.tangent(0.0));
    xa = Controller::next_state(mpcc_ctl.step(xa, pen, path, t));
    xb = Controller::next_state(mpc_ctl.step(xb, pen, path, t));
    if (k >= 25) worst = std::max(worst, (xa.magnet_pos - xb.magnet_pos).norm());
  }
  EXPECT_LT(worst, 5e-3);
  EXPECT_NEAR(xa.theta, xb.theta, 0.02);
}

TEST(Controller, WeightsUpdateAndValidation) {
  Controller ctl{ControllerConfig{}};
  Weights w;
  w.w_f = 0.0;
  ctl.set_weights(w);
  EXPECT_EQ(ctl.config().weights.w_f, 0.0);
  w.w_l = -1.0;
  EXPECT_THROW(ctl.set_weights(w), std::invalid_argument);
  ControllerConfig bad;
  bad.solver.horizon = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
