#include "facewarp/refit.hpp"

#include "facewarp/error.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <iostream>
#include <numbers>

namespace facewarp {

Ray3 backproject(const CameraParams& cam, const Point2& lm2d) {
    const Eigen::Matrix3d a = cam.left_block();
    const double det = a.determinant();
    if (!(std::abs(det) > 1e-12)) {
        throw SingularA("camera left block is singular (det " + std::to_string(det) + ")");
    }
    const auto lu = a.partialPivLu();
    Ray3 ray{-lu.solve(cam.last_column()), lu.solve(Vec3(lm2d.x(), lm2d.y(), 1.0))};
    if (!(ray.direction.norm() > 1e-12)) {
        throw SingularA("backprojected ray has a vanishing direction");
    }
    return ray;
}

double closest_lambda(const Ray3& ray, const Point3& p) {
    return (p - ray.origin).dot(ray.direction) / ray.direction.squaredNorm();
}

Point3 closest_point_on_ray(const Ray3& ray, const Point3& p) { return ray.at(closest_lambda(ray, p)); }

Points3 WarpChain::apply(std::span<const Point3> pts) const {
    Points3 out(pts.begin(), pts.end());
    for (const auto& stage : stages) {
        out = apply_warp(stage, out);
    }
    return out;
}

namespace {

Points3 warped_landmarks(const FaceMesh& mesh, const WarpChain& current) {
    return current.apply(mesh.gather(mesh.vertices, mesh.landmark_vertices()));
}

TpsWarp3D fit_pairs(std::span<const Point3> sources, std::span<const Point3> targets) {
    std::vector<ControlCorrespondence> pairs;
    pairs.reserve(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        pairs.push_back({sources[i], targets[i]});
    }
    return fit(pairs, 0.0);
}

}  // namespace

RefitResult refit_model(const FaceMesh& mesh, const TpsWarp3D& current_warp, const CameraParams& cam,
                        const LandmarkSet2D& regressed_lm) {
    return refit_model(mesh, WarpChain{{current_warp}}, cam, regressed_lm);
}

RefitResult refit_model(const FaceMesh& mesh, const WarpChain& current, const CameraParams& cam,
                        const LandmarkSet2D& regressed_lm) {
    if (regressed_lm.scheme != mesh.scheme) {
        throw SchemeMismatch("regressed landmarks use " + to_string(regressed_lm.scheme) + " but the mesh maps " +
                             to_string(mesh.scheme));
    }
    const std::vector<int> ids = mesh.landmark_ids();
    if (regressed_lm.points.size() != ids.size()) {
        throw SchemeMismatch("expected " + std::to_string(ids.size()) + " landmarks, got " +
                             std::to_string(regressed_lm.points.size()));
    }
    RefitResult result;
    result.sources = warped_landmarks(mesh, current);
    result.targets.reserve(ids.size());
    const Vec4 m3 = cam.row(2);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (regressed_lm.points[i].id != ids[i]) {
            throw SchemeMismatch("landmark id " + std::to_string(regressed_lm.points[i].id) + " at position " +
                                 std::to_string(i) + ", expected " + std::to_string(ids[i]));
        }
        const Ray3 ray = backproject(cam, regressed_lm.points[i].pos);
        const Point3 target = closest_point_on_ray(ray, result.sources[i]);
        const double depth_now = m3.dot(homogeneous(result.sources[i]));
        const double depth_new = m3.dot(homogeneous(target));
        if (depth_now * depth_new <= 0.0) {
            result.behind_camera_ids.push_back(ids[i]);
        }
        result.targets.push_back(target);
    }
    if (!result.behind_camera_ids.empty()) {
        std::cerr << "warning: " << result.behind_camera_ids.size()
                  << " refit targets lie on the far side of the camera plane\n";
    }
    result.refit_warp = fit_pairs(result.sources, result.targets);
    return result;
}

TpsWarp3D refit_toward(const FaceMesh& mesh, const WarpChain& current, std::span<const Point3> targets) {
    const Points3 sources = warped_landmarks(mesh, current);
    if (targets.size() != sources.size()) {
        throw ArgumentError("expected " + std::to_string(sources.size()) + " landmark targets, got " +
                            std::to_string(targets.size()));
    }
    return fit_pairs(sources, targets);
}

CameraParams estimate_camera_dlt(std::span<const Point3> pts3, std::span<const Point2> pts2) {
    if (pts3.size() != pts2.size()) {
        throw ArgumentError("DLT needs matching 2D and 3D point counts");
    }
    if (pts3.size() < 6) {
        throw SingularSystem("DLT needs at least 6 correspondences");
    }
    // u (a9 x + a10 y + a11 z + 1) = a1 x + a2 y + a3 z + a4, likewise for v.
    const auto n = static_cast<Eigen::Index>(pts3.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, CameraParams::kSize);
    Eigen::VectorXd rhs(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point3& p = pts3[static_cast<std::size_t>(i)];
        const Point2& q = pts2[static_cast<std::size_t>(i)];
        a.block<1, 3>(2 * i, 0) = p.transpose();
        a(2 * i, 3) = 1.0;
        a.block<1, 3>(2 * i, 8) = -q.x() * p.transpose();
        rhs[2 * i] = q.x();
        a.block<1, 3>(2 * i + 1, 4) = p.transpose();
        a(2 * i + 1, 7) = 1.0;
        a.block<1, 3>(2 * i + 1, 8) = -q.y() * p.transpose();
        rhs[2 * i + 1] = q.y();
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < CameraParams::kSize) {
        throw SingularSystem("DLT system is rank deficient");
    }
    const Eigen::VectorXd sol = qr.solve(rhs);
    std::array<double, CameraParams::kSize> values{};
    for (int i = 0; i < CameraParams::kSize; ++i) {
        values[static_cast<std::size_t>(i)] = sol[i];
    }
    return CameraParams(values);
}

double estimate_yaw_degrees(const CameraParams& cam) {
    const Eigen::Matrix3d a = cam.left_block();
    // For M = K [R | t] with upper-triangular K, the last row of A is parallel
    // to the third rotation row, whose x component is -sin(yaw) for
    // R = Rz Ry Rx. Affine cameras fall back to orthonormalizing rows 1 and 2.
    Vec3 r3 = a.row(2).transpose();
    if (!(r3.norm() > 1e-12)) {
        Vec3 r1 = a.row(0).transpose();
        Vec3 r2 = a.row(1).transpose();
        if (!(r1.norm() > 0.0) || !(r2.norm() > 0.0)) {
            throw SingularA("camera rows vanish; yaw undefined");
        }
        r3 = r1.normalized().cross(r2.normalized());
        if (!(r3.norm() > 1e-12)) {
            throw SingularA("camera rows are parallel; yaw undefined");
        }
    }
    r3.normalize();
    return std::abs(std::asin(std::clamp(r3.x(), -1.0, 1.0))) * 180.0 / std::numbers::pi;
}

}  // namespace facewarp
