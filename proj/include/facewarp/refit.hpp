#pragma once

#include "facewarp/landmarks.hpp"
#include "facewarp/mesh.hpp"
#include "facewarp/projection.hpp"
#include "facewarp/tps.hpp"

#include <span>
#include <vector>

namespace facewarp {

/// origin + lambda * direction, lambda over the whole real line.
struct Ray3 {
    Point3 origin;
    Vec3 direction;

    Point3 at(double lambda) const { return origin + lambda * direction; }
};

/// Ray of all points projecting to lm2d: origin = camera center (-A^{-1} b),
/// direction = A^{-1} (u, v, 1). Throws SingularA.
Ray3 backproject(const CameraParams& cam, const Point2& lm2d);

/// Parameter of the point on the (full) line closest to p.
double closest_lambda(const Ray3& ray, const Point3& p);
Point3 closest_point_on_ray(const Ray3& ray, const Point3& p);

/// A warp applied after another: vertices -> first -> second -> ...
/// Every stage is kept so the composition stays exact.
struct WarpChain {
    std::vector<TpsWarp3D> stages;

    Points3 apply(std::span<const Point3> pts) const;
};

struct RefitResult {
    /// New warp W' fitted in warped space (controls = current warped landmarks).
    TpsWarp3D refit_warp;
    /// Current warped landmark 3D positions and their closest ray points.
    Points3 sources;
    Points3 targets;
    /// Ids whose closest point lies behind the camera (negative projective depth
    /// relative to the current landmark).
    std::vector<int> behind_camera_ids;
};

/// Backprojects each regressed landmark, moves the corresponding warped
/// landmark vertex to the closest point on its ray, and fits a TPS through
/// those correspondences. Applying `current_warp` then `refit_warp` to the
/// mesh makes the landmark vertices project onto `regressed_lm`.
/// Throws SchemeMismatch, SingularA or SingularSystem.
RefitResult refit_model(const FaceMesh& mesh, const WarpChain& current, const CameraParams& cam,
                        const LandmarkSet2D& regressed_lm);
RefitResult refit_model(const FaceMesh& mesh, const TpsWarp3D& current_warp, const CameraParams& cam,
                        const LandmarkSet2D& regressed_lm);

/// The same machinery with caller-chosen 3D targets for the landmark vertices
/// (e.g. a neutral expression): fits a warp from the current warped landmarks
/// to `targets` (ascending landmark id order).
TpsWarp3D refit_toward(const FaceMesh& mesh, const WarpChain& current, std::span<const Point3> targets);

/// Linear (DLT) estimate of the camera from >= 6 2D-3D correspondences with
/// M34 fixed to 1. Throws SingularSystem for degenerate configurations.
CameraParams estimate_camera_dlt(std::span<const Point3> pts3, std::span<const Point2> pts2);

/// Absolute yaw in degrees (rotation about the model's vertical axis) read
/// from the camera's left block. Exact for view_camera() cameras; for affine
/// cameras rows 1 and 2 are orthonormalized, which is an approximation.
double estimate_yaw_degrees(const CameraParams& cam);

}  // namespace facewarp
