#pragma once

// Reference computations shared by unit tests and the acceptance runner.
// They deliberately avoid the library's own formulas.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "emguide/em_model.hpp"
#include "emguide/reference_path.hpp"

namespace oracle {

using emguide::Vec2;
using emguide::Vec3;

/// Force on dipole `m1` at `p1` from dipole `m2` at `p2`, as the negative
/// gradient of the interaction energy U = −m1·B2(p1), Richardson-extrapolated
/// central differences.
inline Vec3 dipole_force_from_energy(const Vec3& m1, const Vec3& p1, const Vec3& m2, const Vec3& p2) {
  auto energy = [&](const Vec3& p) {
    const Vec3 r = p - p2;
    const double rn = r.norm();
    const Vec3 rh = r / rn;
    const Vec3 b = emguide::em::kMu0 / (4.0 * emguide::kPi) * (3.0 * m2.dot(rh) * rh - m2) / (rn * rn * rn);
    return -m1.dot(b);
  };
  const double h = 1e-4 * (p1 - p2).norm();
  Vec3 f;
  for (int i = 0; i < 3; ++i) {
    auto diff = [&](double s) {
      Vec3 a = p1, b = p1;
      a[i] += s;
      b[i] -= s;
      return (energy(a) - energy(b)) / (2.0 * s);
    };
    f[i] = -(4.0 * diff(h) - diff(2.0 * h)) / 3.0;
  }
  return f;
}

/// Largest real root of 4x⁴ − 27x² + 4 in (0, 1): the stationary point of f0.
inline double profile_argmax_ratio() { return std::sqrt((27.0 - std::sqrt(27.0 * 27.0 - 64.0)) / 8.0); }

/// Horizontal shift δ minimizing Σ (g(d) − f(d + δ))² over a d grid, found by
/// golden-section search in [−range, range].
inline double best_fit_shift(const std::function<double(double)>& g, const std::function<double(double)>& f,
                             double d_lo, double d_hi, double range, int samples = 400) {
  auto sse = [&](double delta) {
    double s = 0.0;
    for (int i = 0; i <= samples; ++i) {
      const double d = d_lo + (d_hi - d_lo) * i / samples;
      const double e = g(d) - f(std::abs(d + delta));
      s += e * e;
    }
    return s;
  };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = -range, b = range;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = sse(c), fd = sse(d);
  for (int it = 0; it < 200 && b - a > 1e-10; ++it) {
    if (fc < fd) {
      b = d; d = c; fd = fc; c = b - phi * (b - a); fc = sse(c);
    } else {
      a = c; c = d; fc = fd; d = a + phi * (b - a); fd = sse(d);
    }
  }
  return 0.5 * (a + b);
}

/// Nearest distance from p to segment ab.
inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

/// Dense brute-force closest θ on a path.
inline double brute_force_progress(const emguide::ReferencePath& path, const Vec2& p, int samples = 20000) {
  double best = 0.0, best_d = 1e300;
  for (int i = 0; i <= samples; ++i) {
    const double th = path.length() * i / samples;
    const double d = (path.evaluate(th) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = th;
    }
  }
  return best;
}

}  // namespace oracle
