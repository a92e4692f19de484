#include "emguide/reference_path.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace emguide {

namespace {

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 5> kGlNodes = {
    -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
    0.9061798459386640};
constexpr std::array<double, 5> kGlWeights = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891};

constexpr double kMinSpeed = 1e-12;

}  // namespace

ReferencePath ReferencePath::build(std::span<const Vec2> points, PathKind kind,
                                   const PathOptions& options) {
  if (points.size() < 2) {
    throw std::invalid_argument("ReferencePath: need at least two points");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw std::invalid_argument("ReferencePath: non-finite point");
    }
    if (i > 0 && (points[i] - points[i - 1]).norm() <= 1e-12) {
      throw std::invalid_argument("ReferencePath: duplicate consecutive points");
    }
  }

  ReferencePath path;
  path.kind_ = kind;
  path.options_ = options;
  path.points_.assign(points.begin(), points.end());
  const std::size_t n = points.size();

  if (kind == PathKind::Polyline) {
    path.table_u_.reserve(n);
    path.table_theta_.reserve(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) acc += (points[i] - points[i - 1]).norm();
      path.table_u_.push_back(static_cast<double>(i));
      path.table_theta_.push_back(acc);
    }
  } else {
    // Closed curves wrap their end tangents; open ones extrapolate linearly.
    const bool closed = n > 3 && (points[n - 1] - points[0]).norm() <= 1e-9;
    path.ctrl_.reserve(n + 2);
    path.ctrl_.push_back(closed ? points[n - 2] : Vec2(2.0 * points[0] - points[1]));
    for (const auto& p : points) path.ctrl_.push_back(p);
    path.ctrl_.push_back(closed ? points[1] : Vec2(2.0 * points[n - 1] - points[n - 2]));

    const int segments = static_cast<int>(n) - 1;
    path.table_u_.push_back(0.0);
    path.table_theta_.push_back(0.0);
    double acc = 0.0;
    for (int seg = 0; seg < segments; ++seg) {
      const double chord = (points[seg + 1] - points[seg]).norm();
      const int m = std::max(8, static_cast<int>(std::ceil(options.samples_per_meter * chord)));
      for (int j = 0; j < m; ++j) {
        const double u0 = seg + static_cast<double>(j) / m;
        const double u1 = (j + 1 == m) ? seg + 1.0 : seg + static_cast<double>(j + 1) / m;
        // Adaptive refinement: split any interval whose one-panel and
        // two-panel estimates disagree.
        std::vector<std::pair<double, double>> stack{{u0, u1}};
        std::vector<std::pair<double, double>> done;
        while (!stack.empty()) {
          auto [a, b] = stack.back();
          stack.pop_back();
          const double mid = 0.5 * (a + b);
          const double whole = path.segment_arc(seg, a - seg, b - seg);
          const double halves =
              path.segment_arc(seg, a - seg, mid - seg) + path.segment_arc(seg, mid - seg, b - seg);
          if (std::abs(whole - halves) > 1e-10 * std::max(halves, 1e-9) && (b - a) > 1e-6) {
            stack.push_back({mid, b});
            stack.push_back({a, mid});
          } else {
            done.push_back({a, b});
          }
        }
        for (auto [a, b] : done) {
          acc += path.segment_arc(seg, a - seg, b - seg);
          path.table_u_.push_back(b);
          path.table_theta_.push_back(acc);
        }
      }
    }
  }

  path.length_ = path.table_theta_.back();
  double res = 0.0;
  for (std::size_t i = 1; i < path.table_theta_.size(); ++i) {
    res = std::max(res, path.table_theta_[i] - path.table_theta_[i - 1]);
  }
  path.resolution_ = kind == PathKind::Polyline
                         ? std::min(res, 1.0 / options.samples_per_meter)
                         : res;
  if (!(path.length_ > 0.0)) {
    throw std::invalid_argument("ReferencePath: zero length");
  }
  return path;
}

ReferencePath ReferencePath::stationary(const Vec2& point) {
  if (!point.allFinite()) throw std::invalid_argument("ReferencePath: non-finite point");
  ReferencePath path;
  path.points_ = {point};
  path.table_u_ = {0.0};
  path.table_theta_ = {0.0};
  return path;
}

ReferencePath::CurvePoint ReferencePath::curve(double u) const {
  const int segments = static_cast<int>(points_.size()) - 1;
  int seg = static_cast<int>(std::floor(u));
  seg = std::clamp(seg, 0, segments - 1);
  const double t = u - seg;
  const Vec2& p0 = ctrl_[seg];
  const Vec2& p1 = ctrl_[seg + 1];
  const Vec2& p2 = ctrl_[seg + 2];
  const Vec2& p3 = ctrl_[seg + 3];
  const Vec2 c1 = 0.5 * (p2 - p0);
  const Vec2 c2 = 0.5 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3);
  const Vec2 c3 = 0.5 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3);
  CurvePoint out;
  out.p = p1 + t * (c1 + t * (c2 + t * c3));
  out.dp = c1 + t * (2.0 * c2 + 3.0 * t * c3);
  out.ddp = 2.0 * c2 + 6.0 * t * c3;
  return out;
}

double ReferencePath::segment_arc(int seg, double t0, double t1) const {
  const double half = 0.5 * (t1 - t0);
  const double mid = 0.5 * (t1 + t0);
  double sum = 0.0;
  for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
    sum += kGlWeights[i] * curve(seg + mid + half * kGlNodes[i]).dp.norm();
  }
  return sum * half;
}

double ReferencePath::curve_param(double theta) const {
  const auto it = std::upper_bound(table_theta_.begin(), table_theta_.end(), theta);
  std::size_t j = static_cast<std::size_t>(std::distance(table_theta_.begin(), it));
  j = std::clamp<std::size_t>(j, 1, table_theta_.size() - 1) - 1;
  const double th0 = table_theta_[j], th1 = table_theta_[j + 1];
  const double ua = table_u_[j], ub = table_u_[j + 1];
  const int seg = std::min(static_cast<int>(std::floor(ua)), static_cast<int>(points_.size()) - 2);
  double u = ua + (theta - th0) / (th1 - th0) * (ub - ua);
  for (int iter = 0; iter < 3; ++iter) {
    const double residual = th0 + segment_arc(seg, ua - seg, u - seg) - theta;
    const double speed = std::max(curve(u).dp.norm(), kMinSpeed);
    u = std::clamp(u - residual / speed, ua, ub);
  }
  return u;
}

PathSample ReferencePath::sample(double theta) const {
  PathSample out;
  if (theta < 0.0 || theta > length_ || !std::isfinite(theta)) {
    out.clamped = true;
    theta = std::isfinite(theta) ? std::clamp(theta, 0.0, length_) : 0.0;
  }
  if (points_.size() == 1) {
    out.point = points_[0];
    return out;
  }
  if (kind_ == PathKind::Polyline) {
    const auto it = std::upper_bound(table_theta_.begin(), table_theta_.end(), theta);
    std::size_t j = static_cast<std::size_t>(std::distance(table_theta_.begin(), it));
    j = std::clamp<std::size_t>(j, 1, table_theta_.size() - 1) - 1;
    const Vec2 dir = (points_[j + 1] - points_[j]).normalized();
    out.point = points_[j] + (theta - table_theta_[j]) * dir;
    out.tangent = dir;
    const double corner_eps = 1e-12 * std::max(1.0, length_);
    // Interior vertex exactly at θ: take the normalized mean direction.
    std::size_t corner = table_theta_.size();
    if (j > 0 && std::abs(theta - table_theta_[j]) <= corner_eps) corner = j;
    if (j + 2 < table_theta_.size() && std::abs(theta - table_theta_[j + 1]) <= corner_eps)
      corner = j + 1;
    if (corner < table_theta_.size()) {
      const Vec2 before = (points_[corner] - points_[corner - 1]).normalized();
      const Vec2 after = (points_[corner + 1] - points_[corner]).normalized();
      const Vec2 mean = 0.5 * (before + after);
      out.point = points_[corner];
      out.tangent = mean.norm() > 1e-12 ? Vec2(mean.normalized()) : after;
    }
    out.tangent_rate.setZero();
    return out;
  }
  const double u = curve_param(theta);
  const CurvePoint cp = curve(u);
  const double speed = std::max(cp.dp.norm(), kMinSpeed);
  out.point = cp.p;
  out.tangent = cp.dp / speed;
  const Vec2 normal_part = cp.ddp - out.tangent * out.tangent.dot(cp.ddp);
  out.tangent_rate = normal_part / (speed * speed);
  return out;
}

Vec2 ReferencePath::evaluate(double theta, bool* clamped) const {
  const PathSample s = sample(theta);
  if (clamped) *clamped = s.clamped;
  return s.point;
}

Vec2 ReferencePath::tangent(double theta, bool* clamped) const {
  const PathSample s = sample(theta);
  if (clamped) *clamped = s.clamped;
  return s.tangent;
}

double ReferencePath::refine_local(const Vec2& point, double lo, double hi) const {
  // Golden-section search; the distance is unimodal over one grid cell.
  constexpr double kInvPhi = 0.6180339887498949;
  lo = std::max(lo, 0.0);
  hi = std::min(hi, length_);
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = (evaluate(c) - point).squaredNorm();
  double fd = (evaluate(d) - point).squaredNorm();
  while (b - a > 1e-10) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = (evaluate(c) - point).squaredNorm();
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = (evaluate(d) - point).squaredNorm();
    }
  }
  const double mid = 0.5 * (a + b);
  // Endpoints of the bracket may be better when the minimum sits on [0, L].
  double best = mid;
  double fbest = (evaluate(mid) - point).squaredNorm();
  for (double cand : {lo, hi}) {
    const double f = (evaluate(cand) - point).squaredNorm();
    if (f < fbest) {
      fbest = f;
      best = cand;
    }
  }
  return best;
}

double ReferencePath::closest_progress(const Vec2& point, double hint_theta) const {
  return closest_progress(point, hint_theta, options_.search_window);
}

double ReferencePath::closest_progress(const Vec2& point, double hint_theta,
                                       double window) const {
  if (length_ <= 0.0) return 0.0;
  hint_theta = std::clamp(std::isfinite(hint_theta) ? hint_theta : 0.0, 0.0, length_);
  double lo = 0.0, hi = length_;
  if (window > 0.0) {
    lo = std::max(0.0, hint_theta - 0.5 * window);
    hi = std::min(length_, hint_theta + 0.5 * window);
  }
  const double step = std::min(resolution_, 0.25 * (hi - lo > 0.0 ? hi - lo : length_));
  auto dist = [&](double th) { return (evaluate(th) - point).squaredNorm(); };

  double theta = hint_theta;
  double f = dist(theta);
  const double f_up = dist(std::min(theta + step, hi));
  const double f_down = dist(std::max(theta - step, lo));
  const double dir = f_up < f_down ? 1.0 : -1.0;
  if (std::min(f_up, f_down) < f) {
    while (true) {
      const double next = std::clamp(theta + dir * step, lo, hi);
      if (next == theta) break;
      const double fn = dist(next);
      if (fn >= f) break;
      theta = next;
      f = fn;
    }
  }
  return refine_local(point, std::max(lo, theta - step), std::min(hi, theta + step));
}

double ReferencePath::closest_progress_global(const Vec2& point) const {
  if (length_ <= 0.0) return 0.0;
  const double step = std::min(resolution_, length_ / 64.0);
  const int n = static_cast<int>(std::ceil(length_ / step));
  double best = 0.0;
  double fbest = (evaluate(0.0) - point).squaredNorm();
  for (int i = 1; i <= n; ++i) {
    const double th = std::min(length_, i * step);
    const double f = (evaluate(th) - point).squaredNorm();
    if (f < fbest) {
      fbest = f;
      best = th;
    }
  }
  return refine_local(point, best - step, best + step);
}

std::vector<Vec2> ReferencePath::resample(double spacing) const {
  if (!(spacing > 0.0)) throw std::invalid_argument("resample: spacing must be > 0");
  std::vector<Vec2> out;
  if (length_ <= 0.0) return {points_.front()};
  const int n = static_cast<int>(std::floor(length_ / spacing));
  out.reserve(static_cast<std::size_t>(n) + 2);
  for (int i = 0; i <= n; ++i) out.push_back(evaluate(i * spacing));
  if (length_ - n * spacing > 1e-12) out.push_back(evaluate(length_));
  return out;
}

RemappedPath replace_reference(const ReferencePath& path, double theta,
                               std::span<const Vec2> new_points) {
  RemappedPath out{ReferencePath::build(new_points, path.kind(), path.options()), 0.0};
  const Vec2 setpoint = path.evaluate(theta);
  out.theta = out.path.closest_progress(setpoint, std::min(theta, out.path.length()));
  return out;
}

}  // namespace emguide
