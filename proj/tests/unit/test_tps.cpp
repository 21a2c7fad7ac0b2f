#include "facewarp/error.hpp"
#include "facewarp/tps.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <numbers>

using namespace facewarp;
using namespace facewarp::testing;

namespace {

std::vector<ControlCorrespondence> random_correspondences(Rng& rng, std::size_t n, double displacement) {
    std::vector<ControlCorrespondence> c(n);
    for (auto& cc : c) {
        cc.source = random_vec3(rng, -1, 1);
        cc.target = cc.source + random_vec3(rng, -displacement, displacement);
    }
    return c;
}

TpsWarp3D random_warp(Rng& rng, std::size_t n) {
    TpsWarp3D w = TpsWarp3D::identity(random_points(rng, n));
    for (int d = 0; d < 3; ++d) {
        for (auto& v : w.theta(d)) {
            v = uniform(rng, -0.5, 0.5);
        }
    }
    return w;
}

double max_abs_diff(const Points3& a, const Points3& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
    }
    return m;
}

}  // namespace

TEST_CASE("kernel_u") {
    CHECK(kernel_u(0.0) == 0.0);
    CHECK(kernel_u(1.0) == 0.0);
    CHECK(kernel_u(std::numbers::e) == doctest::Approx(std::numbers::e * std::numbers::e).epsilon(1e-15));
    CHECK(kernel_u(2.0) == doctest::Approx(4.0 * std::log(2.0)));
    CHECK_THROWS_AS(kernel_u(-1e-3), ArgumentError);
}

TEST_CASE("fit: identical targets give the identity warp") {
    Rng rng(1);
    auto c = random_correspondences(rng, 10, 0.0);
    const TpsWarp3D w = fit(c);
    for (int d = 0; d < 3; ++d) {
        CHECK(w.theta(d).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Points3 probe = random_points(rng, 100, -3, 3);
    CHECK(max_abs_diff(apply_warp(w, probe), probe) < 1e-10);
}

TEST_CASE("fit: a pure translation lives in b1") {
    Rng rng(2);
    auto c = random_correspondences(rng, 9, 0.0);
    const Vec3 offset(0.25, -0.5, 1.5);
    for (auto& cc : c) {
        cc.target = cc.source + offset;
    }
    const TpsWarp3D w = fit(c);
    for (int d = 0; d < 3; ++d) {
        CHECK(w.theta(d)[0] == doctest::Approx(offset[d]).epsilon(1e-10));
        CHECK(w.theta(d).tail(w.theta(d).size() - 1).cwiseAbs().maxCoeff() < 1e-10);
    }
    const Points3 probe = random_points(rng, 20, -2, 2);
    const Points3 out = apply_warp(w, probe);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        CHECK((out[i] - probe[i] - offset).norm() < 1e-10);
    }
}

TEST_CASE("fit: exact interpolation and side conditions") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto c = random_correspondences(rng, 8, 0.3);
        const TpsWarp3D w = fit(c);
        Points3 sources;
        for (const auto& cc : c) {
            sources.push_back(cc.source);
        }
        const Points3 out = apply_warp(w, sources);
        for (std::size_t j = 0; j < c.size(); ++j) {
            CHECK((out[j] - c[j].target).cwiseAbs().maxCoeff() < 1e-8);
        }
        for (int d = 0; d < 3; ++d) {
            const auto weights = w.theta(d).tail(8);
            CHECK(std::abs(weights.sum()) < 1e-8);
            Vec3 moment = Vec3::Zero();
            for (std::size_t j = 0; j < 8; ++j) {
                moment += weights[static_cast<Eigen::Index>(j)] * sources[j];
            }
            CHECK(moment.cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("fit: affine maps are reproduced everywhere") {
    Rng rng(4);
    Eigen::Matrix3d a;
    a << 1.1, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.2;
    const Vec3 t(0.3, -0.7, 0.2);
    auto c = random_correspondences(rng, 12, 0.0);
    for (auto& cc : c) {
        cc.target = a * cc.source + t;
    }
    const TpsWarp3D w = fit(c);
    for (int d = 0; d < 3; ++d) {
        CHECK(w.theta(d).tail(12).cwiseAbs().maxCoeff() < 1e-8);
    }
    const Points3 probe = random_points(rng, 50, -2, 2);
    const Points3 out = apply_warp(w, probe);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        CHECK((out[i] - (a * probe[i] + t)).norm() < 1e-8);
    }
}

TEST_CASE("fit: singular configurations are rejected") {
    std::vector<ControlCorrespondence> coplanar;
    for (int i = 0; i < 6; ++i) {
        const Point3 p(std::cos(i), std::sin(i * 1.3), 0.0);
        coplanar.push_back({p, p});
    }
    CHECK_THROWS_AS(fit(coplanar), SingularSystem);

    Rng rng(5);
    auto dup = random_correspondences(rng, 6, 0.1);
    dup.push_back(dup.front());
    CHECK_THROWS_AS(fit(dup), SingularSystem);

    auto three = random_correspondences(rng, 3, 0.1);
    CHECK_THROWS_AS(fit(three), SingularSystem);
}

TEST_CASE("fit: regularization trades interpolation for smoothness") {
    Rng rng(6);
    const auto c = random_correspondences(rng, 15, 0.3);
    const TpsWarp3D exact = fit(c, 0.0);
    const TpsWarp3D smooth = fit(c, 1.0);
    CHECK(smooth.theta_dx.tail(15).norm() < exact.theta_dx.tail(15).norm());
}

TEST_CASE("apply: zero parameters leave points unchanged") {
    Rng rng(7);
    const TpsWarp3D w = TpsWarp3D::identity(random_points(rng, 5));
    const Points3 pts = random_points(rng, 30);
    CHECK(apply_warp(w, pts) == pts);
}

TEST_CASE("grad_wrt_params: structure") {
    Rng rng(8);
    const TpsWarp3D w = random_warp(rng, 6);
    const Points3 pts = random_points(rng, 4);
    const auto zero = grad_wrt_params(w, pts, std::vector<Vec3>(4, Vec3::Zero()));
    CHECK(zero.dx.isZero(0.0));
    CHECK(zero.dy.isZero(0.0));
    CHECK(zero.dz.isZero(0.0));

    // A point sitting on control 2: that kernel entry vanishes.
    const Points3 on_control{w.controls[2]};
    const auto g = grad_wrt_params(w, on_control, std::vector<Vec3>{{1.0, 0.0, 0.0}});
    CHECK(g.dx[4 + 2] == 0.0);
    CHECK(g.dx[0] == 1.0);
    CHECK(g.dy.isZero(0.0));
    CHECK(g.dz.isZero(0.0));

    CHECK_THROWS_AS(grad_wrt_params(w, pts, std::vector<Vec3>(3, Vec3::Zero())), ArgumentError);
}

TEST_CASE("grad_wrt_params: matches central finite differences") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const TpsWarp3D w = random_warp(rng, 7);
        const Points3 pts = random_points(rng, 15);
        std::vector<Vec3> g(pts.size());
        for (auto& v : g) {
            v = random_vec3(rng, -1, 1);
        }
        const auto analytic = grad_wrt_params(w, pts, g);
        for (int d = 0; d < 3; ++d) {
            const TpsParams& theta = w.theta(d);
            const auto numeric = central_gradient(
                [&](const std::vector<double>& x) {
                    TpsWarp3D p = w;
                    p.theta(d) = Eigen::Map<const TpsParams>(x.data(), static_cast<Eigen::Index>(x.size()));
                    const Points3 out = apply_warp(p, pts);
                    double s = 0.0;
                    for (std::size_t i = 0; i < out.size(); ++i) {
                        s += g[i].dot(out[i]);
                    }
                    return s;
                },
                std::vector<double>(theta.data(), theta.data() + theta.size()), 1e-5);
            const TpsParams& a = d == 0 ? analytic.dx : d == 1 ? analytic.dy : analytic.dz;
            CHECK(max_rel_error(std::vector<double>(a.data(), a.data() + a.size()), numeric, 1e-6) < 1e-6);
        }
    }
}

TEST_CASE("accumulation is permutation invariant") {
    Rng rng(10);
    const TpsWarp3D w = random_warp(rng, 5);
    Points3 pts = random_points(rng, 200);
    std::vector<Vec3> g(pts.size());
    for (auto& v : g) {
        v = random_vec3(rng, -1, 1);
    }
    const auto a = grad_wrt_params(w, pts, g);
    std::reverse(pts.begin(), pts.end());
    std::reverse(g.begin(), g.end());
    const auto b = grad_wrt_params(w, pts, g);
    CHECK((a.dx - b.dx).norm() <= 1e-12 * a.dx.norm());
    CHECK((a.dz - b.dz).norm() <= 1e-12 * a.dz.norm());
}

TEST_CASE("TpsBasis agrees with direct evaluation") {
    Rng rng(12);
    const TpsWarp3D w = random_warp(rng, 9);
    const Points3 pts = random_points(rng, 64);
    const TpsBasis basis(pts, w.controls);
    CHECK(max_abs_diff(basis.apply(w), apply_warp(w, pts)) < 1e-12);
    std::vector<Vec3> g(pts.size());
    for (auto& v : g) {
        v = random_vec3(rng, -1, 1);
    }
    const auto a = basis.grad_wrt_params(g);
    const auto b = grad_wrt_params(w, pts, g);
    CHECK((a.dy - b.dy).norm() <= 1e-12 * b.dy.norm());
    CHECK_THROWS_AS(basis.apply(random_warp(rng, 4)), ArgumentError);
}

TEST_CASE("TPS serialization") {
    Rng rng(13);
    const TpsWarp3D w = random_warp(rng, 6);
    const nlohmann::json j = w;
    CHECK(j.at("controls").size() == 6);
    CHECK(j.at("theta_dz").size() == 10);
    const TpsWarp3D back = j.get<TpsWarp3D>();
    CHECK(back.controls == w.controls);
    CHECK(back.theta_dy == w.theta_dy);
    const TpsWarp3D text = TpsWarp3D::from_text(w.to_text());
    CHECK(text.controls == w.controls);
    CHECK(text.theta_dz == w.theta_dz);
    CHECK(w.to_text().rfind("n 6\n", 0) == 0);

    nlohmann::json bad = j;
    bad["theta_dx"].erase(0);
    CHECK_THROWS_AS(bad.get<TpsWarp3D>(), ArgumentError);
}
