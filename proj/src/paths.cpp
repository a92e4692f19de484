#include "emguide/paths.hpp"

#include <cmath>
#include <stdexcept>

namespace emguide {

const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names = {"line", "circle", "spiral", "sinus", "points"};
  return names;
}

std::vector<Vec2> generate_points(const PathSpec& spec) {
  if (spec.generator == "points") return spec.points;
  if (!(spec.scale > 0.0)) throw std::invalid_argument("path scale must be > 0");
  const Vec2 c = spec.center;
  const double a = spec.scale;
  std::vector<Vec2> pts;

  if (spec.generator == "line") {
    const int n = std::max(2, spec.samples);
    for (int i = 0; i < n; ++i) {
      const double u = double(i) / (n - 1);
      pts.push_back(c + Vec2(a * (2.0 * u - 1.0), 0.0));
    }
  } else if (spec.generator == "circle") {
    const int n = spec.samples > 0 ? spec.samples : 64;
    const double r = 0.6 * a;
    for (int i = 0; i <= n; ++i) {
      const double phi = 2.0 * kPi * i / n;
      pts.push_back(c + r * Vec2(std::cos(phi), std::sin(phi)));
    }
  } else if (spec.generator == "spiral") {
    if (!(spec.turns > 0.0)) throw std::invalid_argument("spiral turns must be > 0");
    const int n = spec.samples > 0 ? spec.samples : int(std::ceil(48 * spec.turns));
    const double r0 = 0.1 * a, r1 = 0.7 * a;
    for (int i = 0; i <= n; ++i) {
      const double u = double(i) / n;
      const double phi = 2.0 * kPi * spec.turns * u;
      pts.push_back(c + (r0 + (r1 - r0) * u) * Vec2(std::cos(phi), std::sin(phi)));
    }
  } else if (spec.generator == "sinus") {
    if (!(spec.turns > 0.0)) throw std::invalid_argument("sinus periods must be > 0");
    const int n = spec.samples > 0 ? spec.samples : int(std::ceil(32 * spec.turns));
    for (int i = 0; i <= n; ++i) {
      const double u = double(i) / n;
      pts.push_back(c + Vec2(a * (2.0 * u - 1.0), 0.3 * a * std::sin(2.0 * kPi * spec.turns * u)));
    }
  } else {
    throw std::invalid_argument("unknown path generator '" + spec.generator + "'");
  }
  return pts;
}

ReferencePath build_path(const PathSpec& spec, const PathOptions& options) {
  const std::vector<Vec2> pts = generate_points(spec);
  const PathKind kind = spec.generator == "line" ? PathKind::Polyline : spec.kind;
  return ReferencePath::build(pts, kind, options);
}

}  // namespace emguide
