#include "facewarp/mesh.hpp"

#include "facewarp/error.hpp"
#include "raster.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <set>

namespace facewarp {

void FaceMesh::validate() const {
    const int nv = static_cast<int>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int v : faces[f]) {
            if (v < 0 || v >= nv) {
                throw ArgumentError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                                    " of " + std::to_string(nv));
            }
        }
        if (faces[f][0] == faces[f][1] || faces[f][1] == faces[f][2] || faces[f][0] == faces[f][2]) {
            throw ArgumentError("face " + std::to_string(f) + " repeats a vertex");
        }
    }
    std::set<int> seen_vertices;
    for (const auto& [id, v] : landmark_map) {
        if (v < 0 || v >= nv) {
            throw ArgumentError("landmark " + std::to_string(id) + " references vertex " + std::to_string(v));
        }
    }
    for (int v : control_indices) {
        if (v < 0 || v >= nv) {
            throw ArgumentError("control index " + std::to_string(v) + " out of range");
        }
        if (!seen_vertices.insert(v).second) {
            throw ArgumentError("control index " + std::to_string(v) + " repeated");
        }
    }

    // Edge-manifold: every undirected edge has at most two faces, and no
    // directed edge appears twice (consistent orientation).
    std::map<std::pair<int, int>, int> undirected;
    std::set<std::pair<int, int>> directed;
    std::vector<std::pair<int, int>> bad;
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[static_cast<std::size_t>(k)];
            const int b = f[static_cast<std::size_t>((k + 1) % 3)];
            const auto key = std::minmax(a, b);
            if (++undirected[{key.first, key.second}] == 3) {
                bad.emplace_back(key.first, key.second);
            }
            if (!directed.insert({a, b}).second) {
                bad.emplace_back(a, b);
            }
        }
    }
    if (!bad.empty()) {
        std::sort(bad.begin(), bad.end());
        bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
        std::string list;
        for (std::size_t i = 0; i < bad.size() && i < 10; ++i) {
            list += (i ? ", " : "") + std::to_string(bad[i].first) + "-" + std::to_string(bad[i].second);
        }
        throw ManifoldError("mesh is not edge-manifold; offending edges: " + list +
                                (bad.size() > 10 ? " ..." : ""),
                            bad);
    }
}

std::vector<int> FaceMesh::landmark_vertices() const {
    std::vector<int> out;
    out.reserve(landmark_map.size());
    for (const auto& [id, v] : landmark_map) {
        out.push_back(v);
    }
    return out;
}

std::vector<int> FaceMesh::landmark_ids() const {
    std::vector<int> out;
    out.reserve(landmark_map.size());
    for (const auto& [id, v] : landmark_map) {
        out.push_back(id);
    }
    return out;
}

Points3 FaceMesh::gather(std::span<const Point3> source, std::span<const int> indices) const {
    Points3 out;
    out.reserve(indices.size());
    for (int i : indices) {
        out.push_back(source[static_cast<std::size_t>(i)]);
    }
    return out;
}

Points3 vertex_normals(const FaceMesh& mesh, std::span<const Point3> vertices) {
    if (vertices.size() != mesh.vertices.size()) {
        throw ArgumentError("vertex count does not match the mesh");
    }
    Points3 acc(vertices.size(), Vec3::Zero());
    for (const auto& f : mesh.faces) {
        const Point3& a = vertices[static_cast<std::size_t>(f[0])];
        const Point3& b = vertices[static_cast<std::size_t>(f[1])];
        const Point3& c = vertices[static_cast<std::size_t>(f[2])];
        // |cross| is twice the area, so the sum is area weighted.
        const Vec3 n = (b - a).cross(c - a);
        for (int v : f) {
            acc[static_cast<std::size_t>(v)] += n;
        }
    }
    std::size_t degenerate = 0;
    for (auto& n : acc) {
        const double len = n.norm();
        if (len > 0.0) {
            n /= len;
        } else {
            n = Vec3::UnitZ();
            ++degenerate;
        }
    }
    if (degenerate > 0) {
        std::cerr << "warning: " << degenerate << " vertices have no non-degenerate incident face\n";
    }
    return acc;
}

Point3 estimate_camera_center(const CameraParams& cam) {
    const Eigen::Matrix3d a = cam.left_block();
    const double det = a.determinant();
    if (!(std::abs(det) > 1e-12)) {
        throw SingularA("camera left block is singular (det " + std::to_string(det) + ")");
    }
    return -a.partialPivLu().solve(cam.last_column());
}

VisibilityMask visibility(const FaceMesh& mesh, std::span<const Point3> warped_vertices, const CameraParams& cam,
                          const VisibilityOptions& options) {
    if (warped_vertices.size() != mesh.vertices.size()) {
        throw ArgumentError("warped vertex count does not match the mesh");
    }
    const Point3 center = estimate_camera_center(cam);
    const Points3 normals = vertex_normals(mesh, warped_vertices);
    const std::size_t nv = warped_vertices.size();
    VisibilityMask mask(nv, false);
    for (std::size_t i = 0; i < nv; ++i) {
        mask[i] = normals[i].dot(center - warped_vertices[i]) > 0.0;
    }
    if (!options.zbuffer || nv == 0) {
        return mask;
    }

    // Item buffer: nearest triangle per pixel.
    const Points2 image = project(cam, warped_vertices);
    std::vector<double> depth = projective_depth(cam, warped_vertices);
    double mean_depth = 0.0;
    for (double d : depth) {
        mean_depth += d;
    }
    const double sign = mean_depth >= 0.0 ? 1.0 : -1.0;
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = -dmin;
    for (double& d : depth) {
        d *= sign;
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    const double tolerance = options.depth_tolerance * (dmax - dmin);

    Vec2 lo = image.front();
    Vec2 hi = image.front();
    for (const auto& p : image) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const int res = std::max(2, options.resolution);
    const double extent = std::max((hi - lo).maxCoeff(), 1e-12);
    const double scale = (res - 1) / extent;
    Points2 screen(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        screen[i] = (image[i] - lo) * scale;
    }

    std::vector<double> zbuf(static_cast<std::size_t>(res) * static_cast<std::size_t>(res),
                             std::numeric_limits<double>::infinity());
    std::vector<int> item(zbuf.size(), -1);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        const auto i0 = static_cast<std::size_t>(face[0]);
        const auto i1 = static_cast<std::size_t>(face[1]);
        const auto i2 = static_cast<std::size_t>(face[2]);
        // 1/depth is affine in screen space.
        const double q0 = 1.0 / depth[i0];
        const double q1 = 1.0 / depth[i1];
        const double q2 = 1.0 / depth[i2];
        detail::rasterize_triangle(screen[i0], screen[i1], screen[i2], res, res,
                                   [&](int x, int y, double l0, double l1, double l2) {
                                       const double z = 1.0 / (l0 * q0 + l1 * q1 + l2 * q2);
                                       const auto px = static_cast<std::size_t>(y) * static_cast<std::size_t>(res) +
                                                       static_cast<std::size_t>(x);
                                       if (z < zbuf[px]) {
                                           zbuf[px] = z;
                                           item[px] = static_cast<int>(f);
                                       }
                                   });
    }

    // A front-facing vertex is occluded when one of the nearest triangles in
    // its 3x3 pixel neighbourhood covers its exact image position and lies in
    // front of it there.
    for (std::size_t i = 0; i < nv; ++i) {
        if (!mask[i]) {
            continue;
        }
        const int cx = static_cast<int>(std::lround(screen[i].x()));
        const int cy = static_cast<int>(std::lround(screen[i].y()));
        int candidates[9];
        int count = 0;
        for (int y = std::max(0, cy - 1); y <= std::min(res - 1, cy + 1); ++y) {
            for (int x = std::max(0, cx - 1); x <= std::min(res - 1, cx + 1); ++x) {
                const int f = item[static_cast<std::size_t>(y) * static_cast<std::size_t>(res) + static_cast<std::size_t>(x)];
                if (f >= 0 && std::find(candidates, candidates + count, f) == candidates + count) {
                    candidates[count++] = f;
                }
            }
        }
        for (int c = 0; c < count && mask[i]; ++c) {
            const auto& face = mesh.faces[static_cast<std::size_t>(candidates[c])];
            if (std::find(face.begin(), face.end(), static_cast<int>(i)) != face.end()) {
                continue;
            }
            const auto i0 = static_cast<std::size_t>(face[0]);
            const auto i1 = static_cast<std::size_t>(face[1]);
            const auto i2 = static_cast<std::size_t>(face[2]);
            const Eigen::Vector3d l = detail::barycentric(screen[i0], screen[i1], screen[i2], screen[i]);
            if (!l.allFinite() || l.minCoeff() < 0.0) {
                continue;
            }
            const double q = l[0] / depth[i0] + l[1] / depth[i1] + l[2] / depth[i2];
            if (q > 0.0 && depth[i] > 1.0 / q + tolerance) {
                mask[i] = false;
            }
        }
    }
    return mask;
}

}  // namespace facewarp
