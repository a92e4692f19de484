#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "emguide/types.hpp"

namespace emguide {

enum class PathKind { Polyline, Spline };

struct PathOptions {
  // Arc-length table density for splines (samples per meter of chord).
  double samples_per_meter = 1024.0;
  // Search window for closest_progress; <= 0 means the whole path.
  double search_window = 0.0;
};

/// Geometry of the path at one progress value.
struct PathSample {
  Vec2 point = Vec2::Zero();
  Vec2 tangent = Vec2::UnitX();           // unit, = ds/dθ
  Vec2 tangent_rate = Vec2::Zero();       // dn/dθ
  bool clamped = false;                   // θ was outside [0, L]
};

/// Arc-length parameterized target trajectory s(θ), θ ∈ [0, L].
/// Immutable after construction.
class ReferencePath {
 public:
  /// Throws std::invalid_argument for fewer than two points or duplicate
  /// consecutive points.
  static ReferencePath build(std::span<const Vec2> points, PathKind kind,
                             const PathOptions& options = {});

  /// Degenerate zero-length path holding a single point (L = 0).
  static ReferencePath stationary(const Vec2& point);

  double length() const { return length_; }
  PathKind kind() const { return kind_; }
  const std::vector<Vec2>& control_points() const { return points_; }
  const PathOptions& options() const { return options_; }

  Vec2 evaluate(double theta, bool* clamped = nullptr) const;
  Vec2 tangent(double theta, bool* clamped = nullptr) const;
  PathSample sample(double theta) const;

  /// Local minimizer of |s(θ) − point| reached by descending from the hint
  /// inside the configured window.
  double closest_progress(const Vec2& point, double hint_theta) const;
  double closest_progress(const Vec2& point, double hint_theta, double window) const;

  /// Global minimizer by dense scan.
  double closest_progress_global(const Vec2& point) const;

  /// Points along the path every `spacing` meters (endpoints included).
  std::vector<Vec2> resample(double spacing) const;

  /// Spacing of the arc-length lookup (m).
  double table_resolution() const { return resolution_; }

  /// Raw arc-length table (θ values at the table knots).
  const std::vector<double>& arclength_table() const { return table_theta_; }

 private:
  struct CurvePoint {
    Vec2 p, dp, ddp;
  };

  CurvePoint curve(double u) const;
  double segment_arc(int seg, double u0, double u1) const;
  double curve_param(double theta) const;  // spline only
  double refine_local(const Vec2& point, double lo, double hi) const;

  PathKind kind_ = PathKind::Polyline;
  PathOptions options_;
  std::vector<Vec2> points_;
  std::vector<Vec2> ctrl_;  // spline control points incl. phantom ends
  // Table knots (u, θ). For polylines u is the vertex index.
  std::vector<double> table_u_;
  std::vector<double> table_theta_;
  double length_ = 0.0;
  double resolution_ = 0.0;
};

struct RemappedPath {
  ReferencePath path;
  double theta = 0.0;
};

/// Rebuilds the path from new_points and carries the active progress over by
/// projecting the current setpoint onto the new geometry.
RemappedPath replace_reference(const ReferencePath& path, double theta,
                               std::span<const Vec2> new_points);

}  // namespace emguide
