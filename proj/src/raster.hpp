#pragma once

#include "facewarp/types.hpp"

#include <algorithm>
#include <cmath>

namespace facewarp::detail {

/// Visits every pixel center (integer coordinates) inside the 2D triangle
/// (a, b, c), either winding, passing barycentric weights of a, b and c.
template <class Visit>
void rasterize_triangle(const Vec2& a, const Vec2& b, const Vec2& c, int width, int height, Visit&& visit) {
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (!(std::abs(area) > 1e-12)) {
        return;
    }
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
    const double inv = 1.0 / area;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double px = x;
            const double py = y;
            const double l0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) * inv;
            const double l1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) * inv;
            const double l2 = 1.0 - l0 - l1;
            if (l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0) {
                visit(x, y, l0, l1, l2);
            }
        }
    }
}

/// Barycentric weights of p w.r.t. (a, b, c); may be negative outside.
inline Eigen::Vector3d barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    const double l0 = ((b.x() - p.x()) * (c.y() - p.y()) - (b.y() - p.y()) * (c.x() - p.x())) / area;
    const double l1 = ((c.x() - p.x()) * (a.y() - p.y()) - (c.y() - p.y()) * (a.x() - p.x())) / area;
    return {l0, l1, 1.0 - l0 - l1};
}

}  // namespace facewarp::detail
