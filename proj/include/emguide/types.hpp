#pragma once

#include <Eigen/Core>

namespace emguide {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace emguide
