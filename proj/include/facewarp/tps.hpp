#pragma once

#include "facewarp/types.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace facewarp {

/// Reciprocal condition number below which the bordered TPS system is
/// treated as singular.
inline constexpr double kTpsRcondCutoff = 1e-12;

/// U(r) = r^2 log r (natural log), with U(0) = 0. Throws ArgumentError for r < 0.
double kernel_u(double r);

/// One displacement function f(p) = b1 + b2 x + b3 y + b4 z + sum_j w_j U(|c_j - p|).
/// Layout: (b1, b2, b3, b4, w_1 ... w_n).
using TpsParams = Eigen::VectorXd;

/// A 3D thin-plate-spline warp p -> p + (f_dx(p), f_dy(p), f_dz(p)).
struct TpsWarp3D {
    Points3 controls;
    TpsParams theta_dx;
    TpsParams theta_dy;
    TpsParams theta_dz;

    /// All-zero parameters over the given controls (the identity warp).
    static TpsWarp3D identity(Points3 controls);

    std::size_t size() const { return controls.size(); }
    std::size_t param_count() const { return controls.size() + 4; }

    const TpsParams& theta(int dim) const;
    TpsParams& theta(int dim);

    /// Throws ArgumentError when the parameter vectors are not n+4 long.
    void validate() const;

    /// Text interop format: "n <count>", then the controls (x y z per line), then
    /// theta_dx, theta_dy, theta_dz with one number per line.
    std::string to_text() const;
    static TpsWarp3D from_text(const std::string& text);
};

void to_json(nlohmann::json& j, const TpsWarp3D& warp);
void from_json(const nlohmann::json& j, TpsWarp3D& warp);

struct ControlCorrespondence {
    Point3 source;
    Point3 target;
};

/// Fits the three displacement functions through the correspondences by
/// solving the bordered (n+4)x(n+4) system
///
///     [ K + lambda I   P ] [ w ]   [ d ]
///     [ P^T            0 ] [ b ] = [ 0 ]
///
/// with K_ij = U(|c_i - c_j|) and P_i = (1, x_i, y_i, z_i). Throws
/// SingularSystem for coplanar or duplicated controls.
TpsWarp3D fit(std::span<const ControlCorrespondence> correspondences, double lambda_reg = 0.0);

/// Output_i = p_i + (f_dx(p_i), f_dy(p_i), f_dz(p_i)).
Points3 apply_warp(const TpsWarp3D& warp, std::span<const Point3> pts);

struct TpsParamGrad {
    TpsParams dx;
    TpsParams dy;
    TpsParams dz;
};

/// dL/dtheta for each displacement function, summed over the points.
TpsParamGrad grad_wrt_params(const TpsWarp3D& warp, std::span<const Point3> pts,
                             std::span<const Vec3> dL_dO);

/// Precomputed design rows (1, x, y, z, U(|c_1 - p|), ..., U(|c_n - p|)) for a
/// fixed point set and control set. Warping the same vertices with many
/// different parameter vectors then reduces to a matrix product.
class TpsBasis {
public:
    TpsBasis() = default;
    TpsBasis(std::span<const Point3> pts, std::span<const Point3> controls);

    std::size_t point_count() const { return static_cast<std::size_t>(rows_.rows()); }
    std::size_t param_count() const { return static_cast<std::size_t>(rows_.cols()); }
    const Eigen::MatrixXd& rows() const { return rows_; }
    const Points3& points() const { return points_; }

    /// Same result as apply_warp for a warp over the basis controls.
    Points3 apply(const TpsWarp3D& warp) const;
    TpsParamGrad grad_wrt_params(std::span<const Vec3> dL_dO) const;

private:
    Points3 points_;
    Eigen::MatrixXd rows_;
};

}  // namespace facewarp
