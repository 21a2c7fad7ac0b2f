#pragma once

#include "facewarp/types.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <span>
#include <string>

namespace facewarp {

/// Points closer than this to the camera's principal plane (|m3 . p| <= eps)
/// are rejected by every projection operation.
inline constexpr double kDepthEpsilon = 1e-9;

using Matrix34 = Eigen::Matrix<double, 3, 4, Eigen::RowMajor>;

/// The 11 free entries of a 3x4 projection matrix, filled row-major with
/// the bottom-right entry pinned to 1:
///
///     [ a1  a2  a3  a4 ]
///     [ a5  a6  a7  a8 ]
///     [ a9 a10 a11  1  ]
///
/// Cameras whose true M34 is zero cannot be represented.
class CameraParams {
public:
    static constexpr int kSize = 11;

    CameraParams() = default;
    explicit CameraParams(const std::array<double, kSize>& a) : a_(a) {}

    /// Divides M by its bottom-right entry. Throws ArgumentError when M34 == 0.
    static CameraParams from_matrix(const Matrix34& m);

    Matrix34 to_matrix() const;

    double operator[](int i) const { return a_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return a_[static_cast<std::size_t>(i)]; }
    const std::array<double, kSize>& values() const { return a_; }

    /// Rows of M as 4-vectors.
    Vec4 row(int r) const;

    /// Left 3x3 block A and last column b of M.
    Eigen::Matrix3d left_block() const;
    Vec3 last_column() const;

    std::string to_text() const;
    static CameraParams from_text(const std::string& line);
    /// Row-major 3x4 block, one matrix row per line.
    std::string matrix_text() const;

    friend bool operator==(const CameraParams&, const CameraParams&) = default;

private:
    std::array<double, kSize> a_{};
};

void to_json(nlohmann::json& j, const CameraParams& cam);
void from_json(const nlohmann::json& j, CameraParams& cam);

using CameraGrad = Eigen::Matrix<double, CameraParams::kSize, 1>;

/// A pinhole view of the model: rotation R = Rz(roll) Ry(yaw) Rx(pitch), the
/// camera on the rotated +z axis at distance 1/perspective, image y pointing
/// down. A model point p maps to
///     center + scale * ((R p).x, -(R p).y) / (1 - perspective * (R p).z).
struct ViewPose {
    double yaw_deg = 0.0;
    double pitch_deg = 0.0;
    double roll_deg = 0.0;
    double scale = 1.0;
    Vec2 center = Vec2::Zero();
    double perspective = 0.1;
};

Eigen::Matrix3d view_rotation(const ViewPose& pose);
CameraParams view_camera(const ViewPose& pose);

/// O_i = (m1.p_i / m3.p_i, m2.p_i / m3.p_i). Throws DegenerateDepth naming the
/// first point whose projective depth is within kDepthEpsilon of zero.
Points2 project(const CameraParams& cam, std::span<const Point3> pts);

/// Projective depth m3 . (p, 1) of every point (no validation).
std::vector<double> projective_depth(const CameraParams& cam, std::span<const Point3> pts);

/// dL/da accumulated over all points, given dL/dO per projected point.
CameraGrad grad_wrt_camera(const CameraParams& cam, std::span<const Point3> pts,
                           std::span<const Vec2> dL_dO);

/// dL/dp per point (x, y, z only) given dL/dO per projected point.
Points3 grad_wrt_points(const CameraParams& cam, std::span<const Point3> pts,
                        std::span<const Vec2> dL_dO);

}  // namespace facewarp
