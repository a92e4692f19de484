#pragma once

// Built-in target shapes: line, circle, spiral and sinus.

#include <string>
#include <vector>

#include "emguide/reference_path.hpp"

namespace emguide {

struct PathSpec {
  std::string generator = "line";  // line | circle | spiral | sinus | points
  Vec2 center = Vec2(0.15, 0.15);
  double scale = 0.1;   // half-extent of the shape (m)
  double turns = 2.0;   // spiral turns / sinus periods
  int samples = 0;      // 0 picks a per-shape default
  PathKind kind = PathKind::Spline;
  std::vector<Vec2> points;  // used by "points"
};

const std::vector<std::string>& generator_names();

/// Control points of the shape. Throws std::invalid_argument for an unknown
/// generator or non-positive scale.
std::vector<Vec2> generate_points(const PathSpec& spec);

/// Builds the reference path; lines are always polylines.
ReferencePath build_path(const PathSpec& spec, const PathOptions& options = {});

}  // namespace emguide
