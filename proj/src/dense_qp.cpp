#include "emguide/dense_qp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace emguide::qp {

namespace {

// One-sided constraint sign·v_index − offset ≥ 0, where v is x (box rows) or
// G x (general rows).
struct Side {
  bool general;
  int index;
  double sign;
  double offset;
};

std::vector<Side> collect_sides(const Problem& p) {
  std::vector<Side> sides;
  const auto n = p.g.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p.lb.size() == n && std::isfinite(p.lb[j])) sides.push_back({false, int(j), 1.0, p.lb[j]});
    if (p.ub.size() == n && std::isfinite(p.ub[j])) sides.push_back({false, int(j), -1.0, -p.ub[j]});
  }
  for (Eigen::Index i = 0; i < p.G.rows(); ++i) {
    if (std::isfinite(p.glb[i])) sides.push_back({true, int(i), 1.0, p.glb[i]});
    if (std::isfinite(p.gub[i])) sides.push_back({true, int(i), -1.0, -p.gub[i]});
  }
  return sides;
}

// a_kᵀv for every side, given v and G v.
void apply_sides(const std::vector<Side>& sides, const Eigen::VectorXd& v,
                 const Eigen::VectorXd& gv, Eigen::VectorXd& out) {
  for (std::size_t k = 0; k < sides.size(); ++k) {
    const Side& s = sides[k];
    out[Eigen::Index(k)] = s.sign * (s.general ? gv[s.index] : v[s.index]);
  }
}

// Σ a_k w_k.
Eigen::VectorXd accumulate_sides(const std::vector<Side>& sides, const Problem& p,
                                 const Eigen::VectorXd& w) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.g.size());
  Eigen::VectorXd row_acc = Eigen::VectorXd::Zero(p.G.rows());
  for (std::size_t k = 0; k < sides.size(); ++k) {
    const Side& s = sides[k];
    if (s.general) {
      row_acc[s.index] += s.sign * w[Eigen::Index(k)];
    } else {
      out[s.index] += s.sign * w[Eigen::Index(k)];
    }
  }
  if (p.G.rows() > 0) out.noalias() += p.G.transpose() * row_acc;
  return out;
}

double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

}  // namespace

double max_violation(const Problem& p, const Eigen::VectorXd& x) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (p.lb.size() == x.size() && std::isfinite(p.lb[j])) worst = std::max(worst, p.lb[j] - x[j]);
    if (p.ub.size() == x.size() && std::isfinite(p.ub[j])) worst = std::max(worst, x[j] - p.ub[j]);
  }
  if (p.G.rows() > 0) {
    const Eigen::VectorXd gx = p.G * x;
    for (Eigen::Index i = 0; i < gx.size(); ++i) {
      if (std::isfinite(p.glb[i])) worst = std::max(worst, p.glb[i] - gx[i]);
      if (std::isfinite(p.gub[i])) worst = std::max(worst, gx[i] - p.gub[i]);
    }
  }
  return worst;
}

Result solve(const Problem& p, const Options& options) {
  const Eigen::Index n = p.g.size();
  const std::vector<Side> sides = collect_sides(p);
  const Eigen::Index m = Eigen::Index(sides.size());

  Result result;
  result.x = Eigen::VectorXd::Zero(n);

  if (m == 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(p.H);
    result.x = llt.solve(-p.g);
    result.converged = llt.info() == Eigen::Success;
    return result;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd offsets(m);
  for (Eigen::Index k = 0; k < m; ++k) offsets[k] = sides[std::size_t(k)].offset;

  Eigen::VectorXd ax(m), gx(p.G.rows());
  auto eval_ax = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    if (p.G.rows() > 0) gx.noalias() = p.G * v;
    apply_sides(sides, v, gx, out);
  };

  eval_ax(x, ax);
  Eigen::VectorXd s = (ax - offsets).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);

  const double g_scale = 1.0 + p.g.lpNorm<Eigen::Infinity>();
  const double b_scale = 1.0 + offsets.lpNorm<Eigen::Infinity>();

  Eigen::MatrixXd normal(n, n);
  Eigen::VectorXd row_weight(p.G.rows());
  Eigen::VectorXd adx(m), gdx(p.G.rows());

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    eval_ax(x, ax);
    const Eigen::VectorXd r_p = ax - offsets - s;
    const Eigen::VectorXd r_d = p.H * x + p.g - accumulate_sides(sides, p, z);
    const double mu = s.dot(z) / double(m);

    if (r_p.lpNorm<Eigen::Infinity>() <= options.tolerance * b_scale &&
        r_d.lpNorm<Eigen::Infinity>() <= options.tolerance * g_scale &&
        mu <= options.tolerance) {
      result.converged = true;
      break;
    }

    // Normal matrix H + Aᵀ diag(z/s) A.
    normal = p.H;
    row_weight.setZero();
    for (Eigen::Index k = 0; k < m; ++k) {
      const Side& sd = sides[std::size_t(k)];
      const double w = z[k] / s[k];
      if (sd.general) {
        row_weight[sd.index] += w;
      } else {
        normal(sd.index, sd.index) += w;
      }
    }
    if (p.G.rows() > 0) {
      normal.noalias() += p.G.transpose() * row_weight.asDiagonal() * p.G;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success) {
      normal.diagonal().array() += 1e-10 * (1.0 + normal.diagonal().cwiseAbs().maxCoeff());
      llt.compute(normal);
      if (llt.info() != Eigen::Success) break;
    }

    auto newton = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx,
                      Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      const Eigen::VectorXd w = (r_c + z.cwiseProduct(r_p)).cwiseQuotient(s);
      const Eigen::VectorXd rhs = -r_d - accumulate_sides(sides, p, w);
      dx = llt.solve(rhs);
      if (p.G.rows() > 0) gdx.noalias() = p.G * dx;
      apply_sides(sides, dx, gdx, adx);
      ds = adx + r_p;
      dz = -(r_c + z.cwiseProduct(ds)).cwiseQuotient(s);
    };

    Eigen::VectorXd dx, ds, dz;
    const Eigen::VectorXd sz = s.cwiseProduct(z);
    newton(sz, dx, ds, dz);
    double alpha_aff = std::min(step_to_boundary(s, ds), step_to_boundary(z, dz));
    const double mu_aff =
        (s + alpha_aff * ds).dot(z + alpha_aff * dz) / double(m);
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    const Eigen::VectorXd r_c = sz + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(m, sigma * mu);
    newton(r_c, dx, ds, dz);
    const double alpha =
        std::min(1.0, 0.995 * std::min(step_to_boundary(s, ds), step_to_boundary(z, dz)));

    x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
    s = s.cwiseMax(std::numeric_limits<double>::min());
    z = z.cwiseMax(std::numeric_limits<double>::min());
  }

  result.x = x;
  result.max_violation = max_violation(p, x);
  return result;
}

}  // namespace emguide::qp
