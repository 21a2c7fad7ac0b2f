#pragma once

// Shared helpers for the unit and acceptance suites: seeded generators and a
// central-difference oracle that only ever calls forward functions.

#include "facewarp/mesh.hpp"
#include "facewarp/projection.hpp"
#include "facewarp/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace facewarp::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec3(Rng& rng, double lo, double hi) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Points3 random_points(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Points3 pts(n);
    for (auto& p : pts) {
        p = random_vec3(rng, lo, hi);
    }
    return pts;
}

/// Generic projective camera whose depth m3.p stays in roughly [0.6, 1.4] over
/// the unit cube.
inline CameraParams random_camera(Rng& rng) {
    std::array<double, CameraParams::kSize> a{};
    for (int i = 0; i < 8; ++i) {
        a[static_cast<std::size_t>(i)] = uniform(rng, -2.0, 2.0);
    }
    for (int i = 8; i < 11; ++i) {
        a[static_cast<std::size_t>(i)] = uniform(rng, -0.12, 0.12);
    }
    return CameraParams(a);
}

/// d f / d x_i by central differences, f: R^n -> R.
inline std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double step) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = f(x);
        x[i] = orig - step;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, rel_error(a[i], b[i], floor));
    }
    return worst;
}

// Brute-force occlusion oracle: the segment from each vertex to the camera
// center must not cross any triangle that does not contain the vertex.
inline bool segment_hits_triangle(const Vec3& from, const Vec3& to, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 dir = to - from;
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) {
        return false;
    }
    const double inv = 1.0 / det;
    const Vec3 tv = from - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    const double t = e2.dot(qv) * inv;
    return t > 1e-9 && t < 1.0;
}

inline VisibilityMask oracle_visibility(const FaceMesh& mesh, const Points3& verts, const Point3& center) {
    const Points3 normals = vertex_normals(mesh, verts);
    VisibilityMask mask(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i) {
        bool visible = normals[i].dot(center - verts[i]) > 0.0;
        for (std::size_t f = 0; visible && f < mesh.faces.size(); ++f) {
            const auto& face = mesh.faces[f];
            if (face[0] == static_cast<int>(i) || face[1] == static_cast<int>(i) || face[2] == static_cast<int>(i)) {
                continue;
            }
            if (segment_hits_triangle(verts[i], center, verts[static_cast<std::size_t>(face[0])],
                                      verts[static_cast<std::size_t>(face[1])],
                                      verts[static_cast<std::size_t>(face[2])])) {
                visible = false;
            }
        }
        mask[i] = visible;
    }
    return mask;
}

/// View camera at a random orientation outside the unit sphere.
inline CameraParams random_outside_camera(Rng& rng) {
    ViewPose pose;
    pose.yaw_deg = uniform(rng, -180, 180);
    pose.pitch_deg = uniform(rng, -80, 80);
    pose.roll_deg = uniform(rng, -30, 30);
    pose.scale = uniform(rng, 20, 60);
    pose.center = Vec2(uniform(rng, 20, 40), uniform(rng, 20, 40));
    pose.perspective = uniform(rng, 0.1, 0.4);
    return view_camera(pose);
}

}  // namespace facewarp::testing
