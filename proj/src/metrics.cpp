#include "emguide/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace emguide::metrics {

double polyline_length(const PolyLine2D& line) {
  double len = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) len += (line[i] - line[i - 1]).norm();
  return len;
}

PolyLine2D resample(const PolyLine2D& line, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("resample: spacing must be > 0");
  const double total = polyline_length(line);
  if (line.size() < 2 || !(total > 0.0)) {
    throw std::invalid_argument("resample: polyline has zero length");
  }
  PolyLine2D out{line.front()};
  double next = spacing;  // arc length of the next sample
  double walked = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Vec2 seg = line[i] - line[i - 1];
    const double len = seg.norm();
    if (len <= 0.0) continue;
    while (next <= walked + len) {
      out.push_back(line[i - 1] + seg * ((next - walked) / len));
      next += spacing;
    }
    walked += len;
  }
  if ((out.back() - line.back()).norm() > 1e-12) out.push_back(line.back());
  return out;
}

double distance_to_polyline(const Vec2& p, const PolyLine2D& line) {
  if (line.empty()) throw std::invalid_argument("distance_to_polyline: empty line");
  double best = (p - line.front()).squaredNorm();
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Vec2 a = line[i - 1];
    const Vec2 ab = line[i] - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (a + t * ab - p).squaredNorm());
  }
  return std::sqrt(best);
}

double mean_path_deviation(const PolyLine2D& drawn, const PolyLine2D& reference, double spacing) {
  if (reference.size() < 2 || !(polyline_length(reference) > 0.0)) {
    throw std::invalid_argument("mean_path_deviation: degenerate reference");
  }
  const PolyLine2D samples = resample(drawn, spacing);
  double sum = 0.0;
  for (const Vec2& p : samples) sum += distance_to_polyline(p, reference);
  return sum / double(samples.size());
}

double reverse_path_deviation(const PolyLine2D& drawn, const PolyLine2D& reference,
                              double spacing) {
  return mean_path_deviation(reference, drawn, spacing);
}

std::vector<double> setpoint_distance_series(const sim::Trace& trace, const ReferencePath& path) {
  std::vector<double> out;
  out.reserve(trace.rows.size());
  for (const sim::TraceRow& r : trace.rows) out.push_back((r.pen - path.evaluate(r.theta)).norm());
  return out;
}

std::vector<double> pen_magnet_distance_series(const sim::Trace& trace) {
  std::vector<double> out;
  out.reserve(trace.rows.size());
  for (const sim::TraceRow& r : trace.rows) out.push_back((r.pen - r.magnet).norm());
  return out;
}

Stats stats(const std::vector<double>& values) {
  Stats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / double(values.size()));
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

Summary summarize(const sim::Trace& trace, const ReferencePath& path, const std::string& path_name,
                  double spacing) {
  Summary s;
  s.path = path_name;
  s.controller = sim::to_string(trace.controller);
  s.seed = trace.seed;
  s.steps = trace.rows.size();
  s.duration = trace.rows.empty() ? 0.0 : trace.rows.back().t;
  s.diverged = trace.diverged;
  s.timed_out = trace.timed_out;
  PolyLine2D drawn{path.evaluate(0.0)};
  for (const Vec2& p : trace.pen_positions()) drawn.push_back(p);
  const PolyLine2D reference = path.resample(std::min(spacing, 0.25 * path.length()));
  s.pen_path_mean = polyline_length(drawn) > spacing
                        ? mean_path_deviation(drawn, reference, spacing)
                        : distance_to_polyline(drawn.back(), reference);
  s.setpoint_distance = stats(setpoint_distance_series(trace, path));
  s.pen_magnet_distance = stats(pen_magnet_distance_series(trace));
  return s;
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {
      "path", "controller", "seed", "pen_path_mean", "setpoint_mean", "setpoint_std",
      "pen_magnet_mean", "pen_magnet_std", "pen_magnet_max", "duration", "steps", "diverged",
      "timed_out"};
  return cols;
}

std::string summary_row(const Summary& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%d,%d",
                s.path.c_str(), s.controller.c_str(), s.seed, s.pen_path_mean,
                s.setpoint_distance.mean, s.setpoint_distance.std, s.pen_magnet_distance.mean,
                s.pen_magnet_distance.std, s.pen_magnet_distance.max, s.duration, s.steps,
                s.diverged ? 1 : 0, s.timed_out ? 1 : 0);
  return buf;
}

}  // namespace emguide::metrics
