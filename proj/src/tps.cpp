#include "facewarp/tps.hpp"

#include "facewarp/error.hpp"
#include "facewarp/parallel.hpp"

#include <Eigen/LU>

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace facewarp {

namespace {

constexpr std::size_t kMinChunk = 2048;

double kernel_unchecked(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

void check_params(const TpsParams& theta, std::size_t expected, const char* name) {
    if (static_cast<std::size_t>(theta.size()) != expected) {
        throw ArgumentError(std::string(name) + " has " + std::to_string(theta.size()) +
                            " entries, expected " + std::to_string(expected));
    }
}

}  // namespace

double kernel_u(double r) {
    if (!(r >= 0.0)) {
        throw ArgumentError("TPS kernel argument must be non-negative, got " + std::to_string(r));
    }
    return kernel_unchecked(r);
}

TpsWarp3D TpsWarp3D::identity(Points3 controls) {
    TpsWarp3D warp;
    const auto n = static_cast<Eigen::Index>(controls.size()) + 4;
    warp.controls = std::move(controls);
    warp.theta_dx = TpsParams::Zero(n);
    warp.theta_dy = TpsParams::Zero(n);
    warp.theta_dz = TpsParams::Zero(n);
    return warp;
}

const TpsParams& TpsWarp3D::theta(int dim) const {
    switch (dim) {
        case 0: return theta_dx;
        case 1: return theta_dy;
        case 2: return theta_dz;
        default: throw ArgumentError("TPS dimension must be 0, 1 or 2");
    }
}

TpsParams& TpsWarp3D::theta(int dim) {
    return const_cast<TpsParams&>(static_cast<const TpsWarp3D&>(*this).theta(dim));
}

void TpsWarp3D::validate() const {
    check_params(theta_dx, param_count(), "theta_dx");
    check_params(theta_dy, param_count(), "theta_dy");
    check_params(theta_dz, param_count(), "theta_dz");
}

std::string TpsWarp3D::to_text() const {
    validate();
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "n " << controls.size() << '\n';
    for (const auto& c : controls) {
        os << c.x() << ' ' << c.y() << ' ' << c.z() << '\n';
    }
    for (int d = 0; d < 3; ++d) {
        for (double v : theta(d)) {
            os << v << '\n';
        }
    }
    return os.str();
}

TpsWarp3D TpsWarp3D::from_text(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    std::size_t n = 0;
    if (!(is >> tag >> n) || tag != "n") {
        throw ArgumentError("TPS text must start with 'n <count>'");
    }
    Points3 controls(n);
    for (auto& c : controls) {
        if (!(is >> c.x() >> c.y() >> c.z())) {
            throw ArgumentError("TPS text: truncated control list");
        }
    }
    TpsWarp3D warp = identity(std::move(controls));
    for (int d = 0; d < 3; ++d) {
        for (auto& v : warp.theta(d)) {
            if (!(is >> v)) {
                throw ArgumentError("TPS text: truncated parameter list");
            }
        }
    }
    return warp;
}

void to_json(nlohmann::json& j, const TpsWarp3D& warp) {
    warp.validate();
    auto controls = nlohmann::json::array();
    for (const auto& c : warp.controls) {
        controls.push_back({c.x(), c.y(), c.z()});
    }
    auto vec = [](const TpsParams& t) { return std::vector<double>(t.data(), t.data() + t.size()); };
    j = {{"controls", controls},
         {"theta_dx", vec(warp.theta_dx)},
         {"theta_dy", vec(warp.theta_dy)},
         {"theta_dz", vec(warp.theta_dz)}};
}

void from_json(const nlohmann::json& j, TpsWarp3D& warp) {
    Points3 controls;
    for (const auto& c : j.at("controls")) {
        const auto xyz = c.get<std::array<double, 3>>();
        controls.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
    warp = TpsWarp3D::identity(std::move(controls));
    const char* names[3] = {"theta_dx", "theta_dy", "theta_dz"};
    for (int d = 0; d < 3; ++d) {
        const auto v = j.at(names[d]).get<std::vector<double>>();
        warp.theta(d) = Eigen::Map<const TpsParams>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    warp.validate();
}

TpsWarp3D fit(std::span<const ControlCorrespondence> correspondences, double lambda_reg) {
    const auto n = static_cast<Eigen::Index>(correspondences.size());
    if (n < 4) {
        throw SingularSystem("TPS fit needs at least 4 controls, got " + std::to_string(n));
    }
    if (!(lambda_reg >= 0.0)) {
        throw ArgumentError("lambda_reg must be non-negative");
    }
    // Controls are recentred and rescaled in the affine block so the rcond
    // cutoff does not depend on the model's units; the affine part is mapped
    // back to model coordinates below.
    Vec3 centre = Vec3::Zero();
    for (const auto& c : correspondences) {
        centre += c.source;
    }
    centre /= static_cast<double>(n);
    double scale = 0.0;
    for (const auto& c : correspondences) {
        scale = std::max(scale, (c.source - centre).cwiseAbs().maxCoeff());
    }
    if (!(scale > 0.0)) {
        throw SingularSystem("TPS controls all coincide");
    }

    const Eigen::Index size = n + 4;
    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(size, size);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(size, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point3& ci = correspondences[static_cast<std::size_t>(i)].source;
        const Point3& ti = correspondences[static_cast<std::size_t>(i)].target;
        if (!ci.allFinite() || !ti.allFinite()) {
            throw ArgumentError("non-finite TPS correspondence " + std::to_string(i));
        }
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double u = kernel_unchecked(
                (ci - correspondences[static_cast<std::size_t>(j)].source).norm());
            system(i, j) = u;
            system(j, i) = u;
        }
        system(i, i) = lambda_reg;
        system(i, n) = system(n, i) = 1.0;
        const Vec3 local = (ci - centre) / scale;
        for (int k = 0; k < 3; ++k) {
            system(i, n + 1 + k) = system(n + 1 + k, i) = local[k];
        }
        rhs.row(i) = (ti - ci).transpose();
    }

    const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    const double rcond = lu.rcond();
    if (!(rcond > kTpsRcondCutoff) || lu.rank() < size) {
        throw SingularSystem("TPS system is singular (rcond " + std::to_string(rcond) +
                             "); controls are coplanar or duplicated");
    }
    const Eigen::MatrixXd solution = lu.solve(rhs);

    Points3 controls;
    controls.reserve(static_cast<std::size_t>(n));
    for (const auto& c : correspondences) {
        controls.push_back(c.source);
    }
    TpsWarp3D warp = TpsWarp3D::identity(std::move(controls));
    for (int d = 0; d < 3; ++d) {
        TpsParams& theta = warp.theta(d);
        theta.tail(n) = solution.col(d).head(n);
        // f = a0 + a . (p - centre) / scale  =>  b1 = a0 - a . centre / scale, b2..b4 = a / scale
        const double a0 = solution(n, d);
        const Vec3 a = solution.col(d).segment<3>(n + 1) / scale;
        theta[0] = a0 - a.dot(centre);
        theta.segment<3>(1) = a;
    }
    return warp;
}

Points3 apply_warp(const TpsWarp3D& warp, std::span<const Point3> pts) {
    warp.validate();
    const std::size_t n = warp.size();
    Points3 out(pts.size());
    parallel_for(pts.size(), kMinChunk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Point3& p = pts[i];
            Vec3 d(warp.theta_dx[0] + warp.theta_dx.segment<3>(1).dot(p),
                   warp.theta_dy[0] + warp.theta_dy.segment<3>(1).dot(p),
                   warp.theta_dz[0] + warp.theta_dz.segment<3>(1).dot(p));
            for (std::size_t j = 0; j < n; ++j) {
                const double u = kernel_unchecked((warp.controls[j] - p).norm());
                const auto k = static_cast<Eigen::Index>(j) + 4;
                d.x() += warp.theta_dx[k] * u;
                d.y() += warp.theta_dy[k] * u;
                d.z() += warp.theta_dz[k] * u;
            }
            out[i] = p + d;
        }
    });
    return out;
}

TpsParamGrad grad_wrt_params(const TpsWarp3D& warp, std::span<const Point3> pts,
                             std::span<const Vec3> dL_dO) {
    warp.validate();
    if (pts.size() != dL_dO.size()) {
        throw ArgumentError("dL/dO has " + std::to_string(dL_dO.size()) + " entries for " +
                            std::to_string(pts.size()) + " points");
    }
    const auto m = static_cast<Eigen::Index>(warp.param_count());
    TpsParamGrad grad{TpsParams::Zero(m), TpsParams::Zero(m), TpsParams::Zero(m)};
    TpsParams row(m);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Point3& p = pts[i];
        // Jacobian row of the point w.r.t. each theta: (1, x, y, z, U(|c_j - p|)...),
        // nonzero only in the matching output dimension.
        row[0] = 1.0;
        row.segment<3>(1) = p;
        for (std::size_t j = 0; j < warp.size(); ++j) {
            row[static_cast<Eigen::Index>(j) + 4] = kernel_unchecked((warp.controls[j] - p).norm());
        }
        grad.dx += dL_dO[i].x() * row;
        grad.dy += dL_dO[i].y() * row;
        grad.dz += dL_dO[i].z() * row;
    }
    return grad;
}

TpsBasis::TpsBasis(std::span<const Point3> pts, std::span<const Point3> controls)
    : points_(pts.begin(), pts.end()),
      rows_(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(controls.size()) + 4) {
    parallel_for(pts.size(), kMinChunk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            rows_(r, 0) = 1.0;
            rows_.block<1, 3>(r, 1) = pts[i].transpose();
            for (std::size_t j = 0; j < controls.size(); ++j) {
                rows_(r, static_cast<Eigen::Index>(j) + 4) = kernel_unchecked((controls[j] - pts[i]).norm());
            }
        }
    });
}

Points3 TpsBasis::apply(const TpsWarp3D& warp) const {
    warp.validate();
    if (warp.param_count() != param_count()) {
        throw ArgumentError("warp has " + std::to_string(warp.size()) +
                            " controls, basis was built for " + std::to_string(param_count() - 4));
    }
    Eigen::MatrixXd theta(rows_.cols(), 3);
    theta << warp.theta_dx, warp.theta_dy, warp.theta_dz;
    const Eigen::MatrixXd disp = rows_ * theta;
    Points3 out(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        out[i] = points_[i] + disp.row(static_cast<Eigen::Index>(i)).transpose();
    }
    return out;
}

TpsParamGrad TpsBasis::grad_wrt_params(std::span<const Vec3> dL_dO) const {
    if (dL_dO.size() != points_.size()) {
        throw ArgumentError("dL/dO has " + std::to_string(dL_dO.size()) + " entries for " +
                            std::to_string(points_.size()) + " points");
    }
    if (dL_dO.empty()) {
        const auto m = static_cast<Eigen::Index>(param_count());
        return {TpsParams::Zero(m), TpsParams::Zero(m), TpsParams::Zero(m)};
    }
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>> g(
        dL_dO.data()->data(), static_cast<Eigen::Index>(dL_dO.size()), 3);
    const Eigen::MatrixXd grad = rows_.transpose() * g;
    return {grad.col(0), grad.col(1), grad.col(2)};
}

}  // namespace facewarp
