#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <limits>
#include <random>

#include "emguide/dense_qp.hpp"

using namespace emguide;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double objective(const qp::Problem& p, const VectorXd& x) { return 0.5 * x.dot(p.H * x) + p.g.dot(x); }

// Enumerates every active set of the stacked one-sided constraints a_iᵀx ≤ b_i
// and keeps the best feasible stationary point.
VectorXd active_set_oracle(const qp::Problem& p) {
  const int n = int(p.g.size());
  std::vector<VectorXd> rows;
  std::vector<double> rhs;
  for (int i = 0; i < n; ++i) {
    VectorXd e = VectorXd::Zero(n);
    e[i] = 1.0;
    if (std::isfinite(p.ub[i])) { rows.push_back(e); rhs.push_back(p.ub[i]); }
    if (std::isfinite(p.lb[i])) { rows.push_back(-e); rhs.push_back(-p.lb[i]); }
  }
  for (int i = 0; i < p.G.rows(); ++i) {
    if (std::isfinite(p.gub[i])) { rows.push_back(p.G.row(i).transpose()); rhs.push_back(p.gub[i]); }
    if (std::isfinite(p.glb[i])) { rows.push_back(-p.G.row(i).transpose()); rhs.push_back(-p.glb[i]); }
  }
  const int m = int(rows.size());
  VectorXd best;
  double best_f = kInf;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) act.push_back(i);
    if (int(act.size()) > n) continue;
    const int k = int(act.size());
    MatrixXd kkt = MatrixXd::Zero(n + k, n + k);
    VectorXd r(n + k);
    kkt.topLeftCorner(n, n) = p.H;
    r.head(n) = -p.g;
    for (int j = 0; j < k; ++j) {
      kkt.block(0, n + j, n, 1) = rows[act[j]];
      kkt.block(n + j, 0, 1, n) = rows[act[j]].transpose();
      r[n + j] = rhs[act[j]];
    }
    Eigen::FullPivLU<MatrixXd> lu(kkt);
    if (lu.rank() < n + k) continue;
    const VectorXd s = lu.solve(r);
    const VectorXd x = s.head(n);
    bool ok = true;
    for (int i = 0; i < m; ++i) ok = ok && rows[i].dot(x) <= rhs[i] + 1e-9;
    for (int j = 0; j < k; ++j) ok = ok && s[n + j] >= -1e-9;
    if (ok && objective(p, x) < best_f) {
      best_f = objective(p, x);
      best = x;
    }
  }
  return best;
}

qp::Problem random_problem(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  qp::Problem p;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  p.H = a * a.transpose() + 0.1 * MatrixXd::Identity(n, n);
  p.g = VectorXd::NullaryExpr(n, [&] { return 3.0 * u(rng); });
  p.lb = VectorXd::Constant(n, -1.0);
  p.ub = VectorXd::Constant(n, 1.0);
  p.G = MatrixXd::NullaryExpr(m, n, [&] { return u(rng); });
  p.glb = VectorXd::Constant(m, -kInf);
  p.gub = VectorXd::NullaryExpr(m, [&] { return 0.2 + 0.5 * std::abs(u(rng)); });
  return p;
}

}  // namespace

TEST(DenseQp, UnconstrainedMatchesLinearSolve) {
  std::mt19937_64 rng(1);
  qp::Problem p = random_problem(rng, 5, 0);
  p.lb.setConstant(-kInf);
  p.ub.setConstant(kInf);
  const qp::Result r = qp::solve(p);
  ASSERT_TRUE(r.converged);
  const VectorXd x = p.H.ldlt().solve(-p.g);
  EXPECT_NEAR((r.x - x).lpNorm<Eigen::Infinity>(), 0.0, 1e-8);
}

TEST(DenseQp, MatchesActiveSetEnumeration) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 3, m = trial % 3;
    const qp::Problem p = random_problem(rng, n, m);
    const qp::Result r = qp::solve(p);
    const VectorXd x = active_set_oracle(p);
    ASSERT_EQ(x.size(), n);
    EXPECT_TRUE(r.converged) << trial;
    EXPECT_LE(r.max_violation, 1e-8);
    EXPECT_NEAR((r.x - x).lpNorm<Eigen::Infinity>(), 0.0, 1e-6) << trial;
  }
}

TEST(DenseQp, EqualityRowViaEqualBounds) {
  qp::Problem p;
  p.H = MatrixXd::Identity(2, 2);
  p.g = VectorXd::Zero(2);
  p.lb = VectorXd::Constant(2, -kInf);
  p.ub = VectorXd::Constant(2, kInf);
  p.G = MatrixXd::Ones(1, 2);
  p.glb = VectorXd::Constant(1, 1.0);
  p.gub = VectorXd::Constant(1, 1.0);
  const qp::Result r = qp::solve(p);
  EXPECT_NEAR(r.x[0], 0.5, 1e-7);
  EXPECT_NEAR(r.x[1], 0.5, 1e-7);
}

TEST(DenseQp, Deterministic) {
  std::mt19937_64 rng(3);
  const qp::Problem p = random_problem(rng, 6, 3);
  const qp::Result a = qp::solve(p), b = qp::solve(p);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(DenseQp, MaxViolationMeasuresWorstBound) {
  qp::Problem p;
  p.H = MatrixXd::Identity(2, 2);
  p.g = VectorXd::Zero(2);
  p.lb = VectorXd::Constant(2, 0.0);
  p.ub = VectorXd::Constant(2, 1.0);
  p.G = MatrixXd::Ones(1, 2);
  p.glb = VectorXd::Constant(1, -kInf);
  p.gub = VectorXd::Constant(1, 1.0);
  EXPECT_NEAR(qp::max_violation(p, Eigen::Vector2d(1.25, 0.5)), 0.75, 1e-15);
  EXPECT_EQ(qp::max_violation(p, Eigen::Vector2d(0.25, 0.5)), 0.0);
}
