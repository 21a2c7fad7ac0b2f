#include "facewarp/projection.hpp"

#include "facewarp/error.hpp"
#include "facewarp/parallel.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <iomanip>
#include <limits>
#include <sstream>

namespace facewarp {

namespace {

constexpr std::size_t kMinChunk = 8192;

void check_lengths(std::size_t pts, std::size_t grads) {
    if (pts != grads) {
        throw ArgumentError("dL/dO has " + std::to_string(grads) + " entries for " +
                            std::to_string(pts) + " points");
    }
}

// Projective depth of every point, throwing for the first one that is degenerate.
double checked_depth(const Vec4& m3, const Point3& p, std::size_t index) {
    const double w = m3.dot(homogeneous(p));
    if (!(std::abs(w) > kDepthEpsilon)) {
        throw DegenerateDepth(index, w);
    }
    return w;
}

void check_all_depths(const Vec4& m3, std::span<const Point3> pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
        checked_depth(m3, pts[i], i);
    }
}

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

}  // namespace

CameraParams CameraParams::from_matrix(const Matrix34& m) {
    const double s = m(2, 3);
    if (s == 0.0) {
        throw ArgumentError("camera matrix has M34 = 0 and cannot be normalized");
    }
    std::array<double, kSize> a{};
    for (int i = 0; i < kSize; ++i) {
        a[static_cast<std::size_t>(i)] = m(i / 4, i % 4) / s;
    }
    return CameraParams(a);
}

Matrix34 CameraParams::to_matrix() const {
    Matrix34 m;
    for (int i = 0; i < kSize; ++i) {
        m(i / 4, i % 4) = a_[static_cast<std::size_t>(i)];
    }
    m(2, 3) = 1.0;
    return m;
}

Vec4 CameraParams::row(int r) const { return to_matrix().row(r).transpose(); }

Eigen::Matrix3d CameraParams::left_block() const { return to_matrix().leftCols<3>(); }

Vec3 CameraParams::last_column() const { return to_matrix().col(3); }

std::string CameraParams::to_text() const {
    std::string out;
    for (int i = 0; i < kSize; ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += format_number(a_[static_cast<std::size_t>(i)]);
    }
    return out;
}

CameraParams CameraParams::from_text(const std::string& line) {
    std::istringstream is(line);
    std::array<double, kSize> a{};
    for (auto& v : a) {
        if (!(is >> v)) {
            throw ArgumentError("camera text needs 11 numbers: '" + line + "'");
        }
    }
    double extra = 0.0;
    if (is >> extra) {
        throw ArgumentError("camera text has more than 11 numbers: '" + line + "'");
    }
    return CameraParams(a);
}

std::string CameraParams::matrix_text() const {
    const Matrix34 m = to_matrix();
    std::string out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) {
            out += format_number(m(r, c));
            out += c == 3 ? '\n' : ' ';
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const CameraParams& cam) { j = cam.values(); }

void from_json(const nlohmann::json& j, CameraParams& cam) {
    if (!j.is_array() || j.size() != CameraParams::kSize) {
        throw ArgumentError("camera JSON must be an array of 11 numbers");
    }
    cam = CameraParams(j.get<std::array<double, CameraParams::kSize>>());
}

Eigen::Matrix3d view_rotation(const ViewPose& pose) {
    constexpr double kDeg = std::numbers::pi / 180.0;
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(pose.roll_deg * kDeg, Vec3::UnitZ()).toRotationMatrix();
    const Eigen::Matrix3d ry = Eigen::AngleAxisd(pose.yaw_deg * kDeg, Vec3::UnitY()).toRotationMatrix();
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(pose.pitch_deg * kDeg, Vec3::UnitX()).toRotationMatrix();
    return rz * ry * rx;
}

CameraParams view_camera(const ViewPose& pose) {
    const Eigen::Matrix3d r = view_rotation(pose);
    const double k = pose.perspective;
    const Vec3 r0 = r.row(0).transpose();
    const Vec3 r1 = r.row(1).transpose();
    const Vec3 r2 = r.row(2).transpose();
    Matrix34 m;
    m.block<1, 3>(0, 0) = (pose.scale * r0 - pose.center.x() * k * r2).transpose();
    m.block<1, 3>(1, 0) = (-pose.scale * r1 - pose.center.y() * k * r2).transpose();
    m.block<1, 3>(2, 0) = (-k * r2).transpose();
    m(0, 3) = pose.center.x();
    m(1, 3) = pose.center.y();
    m(2, 3) = 1.0;
    return CameraParams::from_matrix(m);
}

Points2 project(const CameraParams& cam, std::span<const Point3> pts) {
    const Matrix34 m = cam.to_matrix();
    const Vec4 m1 = m.row(0).transpose();
    const Vec4 m2 = m.row(1).transpose();
    const Vec4 m3 = m.row(2).transpose();
    check_all_depths(m3, pts);
    Points2 out(pts.size());
    parallel_for(pts.size(), kMinChunk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec4 p = homogeneous(pts[i]);
            const double w = m3.dot(p);
            out[i] = Point2(m1.dot(p) / w, m2.dot(p) / w);
        }
    });
    return out;
}

std::vector<double> projective_depth(const CameraParams& cam, std::span<const Point3> pts) {
    const Vec4 m3 = cam.row(2);
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out[i] = m3.dot(homogeneous(pts[i]));
    }
    return out;
}

CameraGrad grad_wrt_camera(const CameraParams& cam, std::span<const Point3> pts,
                           std::span<const Vec2> dL_dO) {
    check_lengths(pts.size(), dL_dO.size());
    const Matrix34 m = cam.to_matrix();
    const Vec4 m1 = m.row(0).transpose();
    const Vec4 m2 = m.row(1).transpose();
    const Vec4 m3 = m.row(2).transpose();
    check_all_depths(m3, pts);

    // Per chunk partial sums, reduced in chunk order.
    const int workers = max_threads();
    const std::size_t chunks =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                        (pts.size() + kMinChunk - 1) / kMinChunk));
    std::vector<Eigen::Matrix<double, 12, 1>> partial(chunks, Eigen::Matrix<double, 12, 1>::Zero());
    const std::size_t chunk = (pts.size() + chunks - 1) / chunks;
    parallel_for(chunks, 1, [&](std::size_t cb, std::size_t ce) {
        for (std::size_t c = cb; c < ce; ++c) {
            auto& acc = partial[c];
            const std::size_t end = std::min(pts.size(), (c + 1) * chunk);
            for (std::size_t i = c * chunk; i < end; ++i) {
                const Vec4 p = homogeneous(pts[i]);
                const double w = m3.dot(p);
                const double g1 = dL_dO[i].x();
                const double g2 = dL_dO[i].y();
                // dO/dm1 = [p/w; 0], dO/dm2 = [0; p/w], dO/dm3 = -[p (m1.p); p (m2.p)] / w^2
                acc.segment<4>(0) += (g1 / w) * p;
                acc.segment<4>(4) += (g2 / w) * p;
                acc.segment<4>(8) -= ((g1 * m1.dot(p) + g2 * m2.dot(p)) / (w * w)) * p;
            }
        }
    });
    Eigen::Matrix<double, 12, 1> total = Eigen::Matrix<double, 12, 1>::Zero();
    for (const auto& p : partial) {
        total += p;
    }
    // M34 is a constant; only the first 11 entries reach a.
    return total.head<CameraParams::kSize>();
}

Points3 grad_wrt_points(const CameraParams& cam, std::span<const Point3> pts,
                        std::span<const Vec2> dL_dO) {
    check_lengths(pts.size(), dL_dO.size());
    const Matrix34 m = cam.to_matrix();
    const Vec4 m1 = m.row(0).transpose();
    const Vec4 m2 = m.row(1).transpose();
    const Vec4 m3 = m.row(2).transpose();
    check_all_depths(m3, pts);
    const Vec3 r1 = m1.head<3>();
    const Vec3 r2 = m2.head<3>();
    const Vec3 r3 = m3.head<3>();
    Points3 out(pts.size());
    parallel_for(pts.size(), kMinChunk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec4 p = homogeneous(pts[i]);
            const double w = m3.dot(p);
            const double w2 = w * w;
            const Vec3 d1 = r1 / w - (m1.dot(p) / w2) * r3;
            const Vec3 d2 = r2 / w - (m2.dot(p) / w2) * r3;
            out[i] = dL_dO[i].x() * d1 + dL_dO[i].y() * d2;
        }
    });
    return out;
}

}  // namespace facewarp
