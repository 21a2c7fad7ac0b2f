#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace facewarp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

/// Model-space point. Wherever a projection is involved it is read as the
/// homogeneous point (x, y, z, 1); the library never handles general
/// homogeneous 3D points.
using Point3 = Vec3;

/// Image-plane point in pixels (origin top-left, integer values at pixel centers).
using Point2 = Vec2;

using Points3 = std::vector<Point3>;
using Points2 = std::vector<Point2>;

inline Vec4 homogeneous(const Point3& p) { return {p.x(), p.y(), p.z(), 1.0}; }

}  // namespace facewarp
