#include "facewarp/error.hpp"
#include "facewarp/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace facewarp {

namespace {

constexpr double kRadiusX = 1.0;
constexpr double kRadiusY = 1.3;
constexpr double kRadiusZ = 1.0;
constexpr double kMaxLongitude = 0.47 * std::numbers::pi;
constexpr double kMaxLatitude = 0.45 * std::numbers::pi;

double bump(double x, double y, double cx, double cy, double sx, double sy) {
    const double dx = (x - cx) / sx;
    const double dy = (y - cy) / sy;
    return std::exp(-0.5 * (dx * dx + dy * dy));
}

// Facial relief added along +z over the front of the ellipsoid.
double relief(double x, double y) {
    double h = 0.0;
    h += 0.30 * bump(x, y, 0.0, -0.05, 0.10, 0.26);   // nose ridge
    h += 0.12 * bump(x, y, 0.0, -0.28, 0.12, 0.08);   // nose tip
    h += 0.06 * bump(x, y, -0.35, 0.40, 0.22, 0.06);  // brows
    h += 0.06 * bump(x, y, 0.35, 0.40, 0.22, 0.06);
    h -= 0.08 * bump(x, y, -0.35, 0.22, 0.12, 0.08);  // eye sockets
    h -= 0.08 * bump(x, y, 0.35, 0.22, 0.12, 0.08);
    h += 0.06 * bump(x, y, 0.0, -0.60, 0.24, 0.07);   // lips
    h += 0.05 * bump(x, y, 0.0, -0.98, 0.20, 0.10);   // chin
    return h;
}

// Front-view (x, y) positions of each landmark, ordered by id.
std::vector<Vec2> mpie68_layout() {
    std::vector<Vec2> p;
    for (int k = 0; k <= 16; ++k) {  // jaw, image-left to image-right
        const double a = std::numbers::pi * (1.0 + k / 16.0);
        p.emplace_back(0.88 * std::cos(a), 0.2 + 1.2 * std::sin(a));
    }
    for (int k = 0; k < 5; ++k) {  // brows
        const double x = -0.65 + 0.125 * k;
        p.emplace_back(x, 0.42 + 0.05 * std::sin(std::numbers::pi * k / 4.0));
    }
    for (int k = 0; k < 5; ++k) {
        const double x = 0.15 + 0.125 * k;
        p.emplace_back(x, 0.42 + 0.05 * std::sin(std::numbers::pi * k / 4.0));
    }
    for (int k = 0; k < 4; ++k) {  // nose bridge
        p.emplace_back(0.0, 0.30 - 0.15 * k);
    }
    for (int k = 0; k < 5; ++k) {  // nostrils
        p.emplace_back(-0.16 + 0.08 * k, -0.32 + 0.03 * std::sin(std::numbers::pi * k / 4.0));
    }
    const Vec2 right_eye[6] = {{-0.48, 0.22}, {-0.40, 0.27}, {-0.30, 0.27},
                               {-0.22, 0.22}, {-0.30, 0.17}, {-0.40, 0.17}};
    for (const auto& e : right_eye) {
        p.push_back(e);
    }
    const Vec2 left_eye[6] = {{0.22, 0.22}, {0.30, 0.27}, {0.40, 0.27},
                              {0.48, 0.22}, {0.40, 0.17}, {0.30, 0.17}};
    for (const auto& e : left_eye) {
        p.push_back(e);
    }
    const Vec2 mouth[20] = {{-0.32, -0.60}, {-0.20, -0.53}, {-0.08, -0.50}, {0.00, -0.52}, {0.08, -0.50},
                            {0.20, -0.53},  {0.32, -0.60},  {0.20, -0.69},  {0.08, -0.73}, {0.00, -0.74},
                            {-0.08, -0.73}, {-0.20, -0.69}, {-0.24, -0.60}, {-0.10, -0.57}, {0.00, -0.575},
                            {0.10, -0.57},  {0.24, -0.60},  {0.10, -0.64},  {0.00, -0.645}, {-0.10, -0.64}};
    for (const auto& m : mouth) {
        p.push_back(m);
    }
    return p;
}

std::vector<Vec2> aflw21_layout() {
    return {{-0.60, 0.43}, {-0.40, 0.47}, {-0.18, 0.44},  // right brow
            {0.18, 0.44},  {0.40, 0.47},  {0.60, 0.43},   // left brow
            {-0.48, 0.22}, {-0.35, 0.22}, {-0.22, 0.22},  // right eye
            {0.22, 0.22},  {0.35, 0.22},  {0.48, 0.22},   // left eye
            {-0.96, 0.05},                                // right ear
            {-0.14, -0.30}, {0.00, -0.26}, {0.14, -0.30}, // nose
            {0.96, 0.05},                                 // left ear
            {-0.32, -0.60}, {0.00, -0.60}, {0.32, -0.60}, // mouth
            {0.00, -1.00}};                               // chin
}

}  // namespace

FaceMesh make_synthetic_face(const SyntheticFaceOptions& options) {
    if (options.rows < 8 || options.cols < 8) {
        throw ArgumentError("synthetic face grid must be at least 8x8");
    }
    FaceMesh mesh;
    mesh.scheme = options.scheme;
    const int rows = options.rows;
    const int cols = options.cols;
    mesh.vertices.reserve(static_cast<std::size_t>(rows * cols));
    for (int i = 0; i < rows; ++i) {
        const double lat = (0.5 - static_cast<double>(i) / (rows - 1)) * 2.0 * kMaxLatitude;
        for (int j = 0; j < cols; ++j) {
            const double lon = (static_cast<double>(j) / (cols - 1) - 0.5) * 2.0 * kMaxLongitude;
            const double x = kRadiusX * std::cos(lat) * std::sin(lon);
            const double y = kRadiusY * std::sin(lat);
            const double z = kRadiusZ * std::cos(lat) * std::cos(lon) + relief(x, y);
            mesh.vertices.emplace_back(x, y, z);
        }
    }
    auto vid = [cols](int i, int j) { return i * cols + j; };
    for (int i = 0; i + 1 < rows; ++i) {
        for (int j = 0; j + 1 < cols; ++j) {
            const int a = vid(i, j);
            const int b = vid(i, j + 1);
            const int c = vid(i + 1, j);
            const int d = vid(i + 1, j + 1);
            mesh.faces.push_back({a, c, d});
            mesh.faces.push_back({a, d, b});
        }
    }

    // Landmarks snap to the nearest unused vertex in the front view.
    const std::vector<Vec2> layout =
        options.scheme == LandmarkScheme::Aflw21 ? aflw21_layout() : mpie68_layout();
    std::set<int> used;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        int best = -1;
        double best_d = 0.0;
        for (int v = 0; v < static_cast<int>(mesh.vertices.size()); ++v) {
            if (used.count(v) != 0) {
                continue;
            }
            const double d = (mesh.vertices[static_cast<std::size_t>(v)].head<2>() - layout[k]).squaredNorm();
            if (best < 0 || d < best_d) {
                best = v;
                best_d = d;
            }
        }
        used.insert(best);
        mesh.landmark_map.emplace(static_cast<int>(k) + 1, best);
    }

    // Controls: evenly spaced landmark vertices plus samples along the grid border.
    const int total = options.control_count;
    const int lm_count = static_cast<int>(layout.size());
    const int boundary = std::max(12, total - lm_count);
    const int from_landmarks = total - boundary;
    if (from_landmarks < 0) {
        throw ArgumentError("control_count must be at least 12");
    }
    const std::vector<int> lm_vertices = mesh.landmark_vertices();
    for (int k = 0; k < from_landmarks; ++k) {
        const auto idx = static_cast<std::size_t>((static_cast<long>(k) * lm_count) / from_landmarks);
        mesh.control_indices.push_back(lm_vertices[idx]);
    }
    std::vector<int> perimeter;
    for (int j = 0; j < cols - 1; ++j) perimeter.push_back(vid(0, j));
    for (int i = 0; i < rows - 1; ++i) perimeter.push_back(vid(i, cols - 1));
    for (int j = cols - 1; j > 0; --j) perimeter.push_back(vid(rows - 1, j));
    for (int i = rows - 1; i > 0; --i) perimeter.push_back(vid(i, 0));
    for (int k = 0; k < boundary; ++k) {
        const auto idx = static_cast<std::size_t>((static_cast<long>(k) * static_cast<long>(perimeter.size())) / boundary);
        mesh.control_indices.push_back(perimeter[idx]);
    }
    mesh.validate();
    return mesh;
}

FaceMesh make_icosphere(int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    FaceMesh mesh;
    mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                     {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : mesh.vertices) {
        v.normalize();
    }
    mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                  {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoints.find({key.first, key.second});
            if (it != midpoints.end()) {
                return it->second;
            }
            const Point3 m = (mesh.vertices[static_cast<std::size_t>(a)] +
                              mesh.vertices[static_cast<std::size_t>(b)]).normalized();
            mesh.vertices.push_back(m);
            const int id = static_cast<int>(mesh.vertices.size()) - 1;
            midpoints.emplace(std::pair{key.first, key.second}, id);
            return id;
        };
        std::vector<Face> next;
        next.reserve(mesh.faces.size() * 4);
        for (const auto& f : mesh.faces) {
            const int ab = midpoint(f[0], f[1]);
            const int bc = midpoint(f[1], f[2]);
            const int ca = midpoint(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        mesh.faces = std::move(next);
    }
    mesh.landmark_map.clear();
    mesh.validate();
    return mesh;
}

}  // namespace facewarp
