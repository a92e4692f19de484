#pragma once

#include <string>
#include <vector>

#include "emguide/reference_path.hpp"
#include "emguide/simulator.hpp"

namespace emguide::metrics {

using PolyLine2D = std::vector<Vec2>;

inline constexpr double kDefaultSpacing = 0.5e-3;

/// Length of a polyline (zero-length segments allowed).
double polyline_length(const PolyLine2D& line);

/// Equidistant resample by arc length; repeated points are skipped.
/// Throws std::invalid_argument for spacing <= 0 or a zero-length line.
PolyLine2D resample(const PolyLine2D& line, double spacing);

/// Distance from p to the closest point of the polyline.
double distance_to_polyline(const Vec2& p, const PolyLine2D& line);

/// Mean over equidistant samples of `drawn` of the distance to `reference`
/// (directional, drawn → reference). Throws std::invalid_argument for
/// degenerate input or spacing <= 0.
double mean_path_deviation(const PolyLine2D& drawn, const PolyLine2D& reference,
                           double spacing = kDefaultSpacing);

/// The same measure in the reverse direction (reference → drawn).
double reverse_path_deviation(const PolyLine2D& drawn, const PolyLine2D& reference,
                              double spacing = kDefaultSpacing);

/// |pen − s(θ)| per trace row, θ being the controller's own progress.
std::vector<double> setpoint_distance_series(const sim::Trace& trace, const ReferencePath& path);

/// |pen − magnet| per trace row.
std::vector<double> pen_magnet_distance_series(const sim::Trace& trace);

struct Stats {
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
};
Stats stats(const std::vector<double>& values);

/// One flat results row per run.
struct Summary {
  std::string path;
  std::string controller;
  unsigned long long seed = 0;
  double pen_path_mean = 0.0;       // mean_path_deviation of the drawn stroke (m)
  Stats setpoint_distance;         // m
  Stats pen_magnet_distance;       // m
  double duration = 0.0;            // s
  std::size_t steps = 0;
  bool diverged = false;
  bool timed_out = false;
};

Summary summarize(const sim::Trace& trace, const ReferencePath& path, const std::string& path_name,
                  double spacing = kDefaultSpacing);

const std::vector<std::string>& summary_columns();
/// Fixed column order, %.9g numbers, no trailing comma.
std::string summary_row(const Summary& s);

}  // namespace emguide::metrics
