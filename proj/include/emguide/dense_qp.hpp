#pragma once

#include <Eigen/Core>

namespace emguide::qp {

/// min ½xᵀHx + gᵀx  s.t.  lb ≤ x ≤ ub,  glb ≤ G x ≤ gub.
/// Infinite bounds disable the corresponding side. H must be positive definite.
struct Problem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::VectorXd lb, ub;
  Eigen::MatrixXd G;
  Eigen::VectorXd glb, gub;
};

struct Options {
  int max_iterations = 60;
  double tolerance = 1e-10;
};

struct Result {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double max_violation = 0.0;  // worst bound violation of x
};

/// Mehrotra predictor-corrector interior point method on the dense normal
/// equations. Deterministic; single-threaded.
Result solve(const Problem& problem, const Options& options = {});

/// Largest amount by which x violates the bounds of `problem`.
double max_violation(const Problem& problem, const Eigen::VectorXd& x);

}  // namespace emguide::qp
