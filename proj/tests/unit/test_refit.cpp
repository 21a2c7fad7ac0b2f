#include "facewarp/error.hpp"
#include "facewarp/refit.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace facewarp;
using facewarp::testing::Rng;
using facewarp::testing::uniform;

namespace {

const FaceMesh& face() {
    static const FaceMesh mesh = make_synthetic_face();
    return mesh;
}

CameraParams pinhole() {
    // [I | 0] cannot be written with M34 = 1; this is the same pinhole moved
    // one unit along z, so the center sits at (0, 0, -1).
    return CameraParams::from_matrix((Matrix34() << 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1).finished());
}

CameraParams random_view(Rng& rng) {
    ViewPose pose;
    pose.yaw_deg = uniform(rng, -80.0, 80.0);
    pose.pitch_deg = uniform(rng, -15.0, 15.0);
    pose.roll_deg = uniform(rng, -10.0, 10.0);
    pose.scale = uniform(rng, 18.0, 26.0);
    pose.center = Vec2(uniform(rng, 28.0, 36.0), uniform(rng, 28.0, 36.0));
    pose.perspective = uniform(rng, 0.05, 0.15);
    return view_camera(pose);
}

TpsWarp3D random_warp(const FaceMesh& mesh, Rng& rng, double bound) {
    std::vector<ControlCorrespondence> pairs;
    for (const Point3& c : mesh.control_points()) {
        pairs.push_back({c, c + facewarp::testing::random_vec3(rng, -bound, bound)});
    }
    return fit(pairs);
}

LandmarkSet2D as_landmarks(const FaceMesh& mesh, const Points2& pos) {
    LandmarkSet2D set{mesh.scheme, {}};
    const auto ids = mesh.landmark_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        set.points.push_back({ids[i], pos[i], true});
    }
    return set;
}

Points3 landmark_positions(const FaceMesh& mesh, const WarpChain& chain) {
    return chain.apply(mesh.gather(mesh.vertices, mesh.landmark_vertices()));
}

double max_reprojection_error(const FaceMesh& mesh, const WarpChain& chain, const CameraParams& cam,
                              const LandmarkSet2D& lm) {
    const Points2 proj = project(cam, landmark_positions(mesh, chain));
    double worst = 0.0;
    for (std::size_t i = 0; i < proj.size(); ++i) {
        worst = std::max(worst, (proj[i] - lm.points[i].pos).norm());
    }
    return worst;
}

}  // namespace

TEST_CASE("backproject pinhole examples") {
    const Ray3 r0 = backproject(pinhole(), Point2(0, 0));
    CHECK((r0.direction - Vec3(0, 0, 1)).norm() < 1e-15);
    CHECK((r0.origin - Vec3(0, 0, -1)).norm() < 1e-15);
    const Ray3 r1 = backproject(pinhole(), Point2(3, -2));
    CHECK((r1.direction - Vec3(3, -2, 1)).norm() < 1e-15);
}

TEST_CASE("backprojected rays project back onto the landmark") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const CameraParams cam = facewarp::testing::random_camera(rng);
        const Point2 lm(uniform(rng, -5, 5), uniform(rng, -5, 5));
        const Ray3 ray = backproject(cam, lm);
        for (double lambda : {0.5, 1.0, 2.0}) {
            const Point3 p = ray.at(lambda);
            const Points2 o = project(cam, std::span<const Point3>(&p, 1));
            CHECK((o[0] - lm).norm() < 1e-9);
        }
    }
}

TEST_CASE("backproject rejects singular A") {
    CameraParams cam = pinhole();
    Matrix34 m = cam.to_matrix();
    m.row(2) << 0, 0, 0, 1;
    m.row(1) << 1, 0, 0, 0;
    CHECK_THROWS_AS(backproject(CameraParams::from_matrix(m), Point2(0, 0)), SingularA);
}

TEST_CASE("closest point on ray") {
    const Ray3 zaxis{Vec3::Zero(), Vec3(0, 0, 1)};
    CHECK((closest_point_on_ray(zaxis, Vec3(1, 1, 5)) - Vec3(0, 0, 5)).norm() < 1e-15);
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const Ray3 ray{facewarp::testing::random_vec3(rng, -3, 3), facewarp::testing::random_vec3(rng, -2, 2)};
        const Point3 on = ray.at(uniform(rng, -4, 4));
        CHECK((closest_point_on_ray(ray, on) - on).norm() < 1e-12);
        const Point3 p = facewarp::testing::random_vec3(rng, -5, 5);
        const Vec3 d = p - closest_point_on_ray(ray, p);
        CHECK(std::abs(d.dot(ray.direction.normalized())) < 1e-10);
    }
}

TEST_CASE("refit with already-consistent landmarks is the identity") {
    Rng rng(3);
    const FaceMesh& mesh = face();
    const CameraParams cam = random_view(rng);
    const WarpChain chain{{random_warp(mesh, rng, 0.05)}};
    const LandmarkSet2D lm = as_landmarks(mesh, project(cam, landmark_positions(mesh, chain)));
    const RefitResult r = refit_model(mesh, chain, cam, lm);
    const Points3 before = chain.apply(mesh.vertices);
    const Points3 after = apply_warp(r.refit_warp, before);
    double worst = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        worst = std::max(worst, (after[i] - before[i]).norm());
    }
    CHECK(worst < 1e-8);
    CHECK(r.behind_camera_ids.empty());
}

TEST_CASE("single landmark nudged by two pixels") {
    Rng rng(8);
    const FaceMesh& mesh = face();
    const CameraParams cam = random_view(rng);
    const WarpChain chain{{TpsWarp3D::identity(mesh.control_points())}};
    LandmarkSet2D lm = as_landmarks(mesh, project(cam, landmark_positions(mesh, chain)));
    lm.points[30].pos += Vec2(2.0, 0.0);
    const RefitResult r = refit_model(mesh, chain, cam, lm);
    WarpChain next = chain;
    next.stages.push_back(r.refit_warp);
    CHECK(max_reprojection_error(mesh, next, cam, lm) < 1e-6);
}

TEST_CASE("random perturbations reproject exactly and move the mesh smoothly") {
    Rng rng(21);
    const FaceMesh& mesh = face();
    const auto lm_vertices = mesh.landmark_vertices();
    std::vector<bool> is_landmark(mesh.vertices.size(), false);
    for (int v : lm_vertices) {
        is_landmark[static_cast<std::size_t>(v)] = true;
    }
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const CameraParams cam = random_view(rng);
        const WarpChain chain{{random_warp(mesh, rng, 0.05)}};
        LandmarkSet2D lm = as_landmarks(mesh, project(cam, landmark_positions(mesh, chain)));
        for (auto& p : lm.points) {
            p.pos += Vec2(uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5));
        }
        const RefitResult r = refit_model(mesh, chain, cam, lm);
        WarpChain next = chain;
        next.stages.push_back(r.refit_warp);
        CHECK(max_reprojection_error(mesh, next, cam, lm) < 1e-6);

        double lm_move = 0.0;
        for (std::size_t i = 0; i < r.sources.size(); ++i) {
            lm_move = std::max(lm_move, (r.targets[i] - r.sources[i]).norm());
        }
        const Points3 before = chain.apply(mesh.vertices);
        const Points3 after = apply_warp(r.refit_warp, before);
        double other_move = 0.0;
        for (std::size_t i = 0; i < before.size(); ++i) {
            if (!is_landmark[i]) {
                other_move = std::max(other_move, (after[i] - before[i]).norm());
            }
        }
        worst_ratio = std::max(worst_ratio, other_move / lm_move);
    }
    MESSAGE("worst displacement ratio " << worst_ratio);
    CHECK(worst_ratio <= 5.0);
}

TEST_CASE("refitting twice is idempotent") {
    Rng rng(34);
    const FaceMesh& mesh = face();
    const CameraParams cam = random_view(rng);
    const WarpChain chain{{random_warp(mesh, rng, 0.05)}};
    LandmarkSet2D lm = as_landmarks(mesh, project(cam, landmark_positions(mesh, chain)));
    for (auto& p : lm.points) {
        p.pos += Vec2(uniform(rng, -1, 1), uniform(rng, -1, 1));
    }
    WarpChain once = chain;
    once.stages.push_back(refit_model(mesh, once, cam, lm).refit_warp);
    WarpChain twice = once;
    twice.stages.push_back(refit_model(mesh, twice, cam, lm).refit_warp);
    const Points3 a = once.apply(mesh.vertices);
    const Points3 b = twice.apply(mesh.vertices);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, (a[i] - b[i]).norm());
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("refit rejects a different landmark scheme") {
    Rng rng(1);
    const FaceMesh& mesh = face();
    const CameraParams cam = random_view(rng);
    LandmarkSet2D lm{LandmarkScheme::Aflw21, {}};
    for (int i = 0; i < 21; ++i) {
        lm.points.push_back({i, Point2(30, 30), true});
    }
    CHECK_THROWS_AS(refit_model(mesh, TpsWarp3D::identity(mesh.control_points()), cam, lm), SchemeMismatch);
    LandmarkSet2D short_set = as_landmarks(mesh, project(cam, landmark_positions(mesh, WarpChain{})));
    short_set.points.pop_back();
    CHECK_THROWS_AS(refit_model(mesh, WarpChain{}, cam, short_set), SchemeMismatch);
}

TEST_CASE("refit toward arbitrary targets") {
    Rng rng(9);
    const FaceMesh& mesh = face();
    Points3 targets = mesh.gather(mesh.vertices, mesh.landmark_vertices());
    for (auto& t : targets) {
        t += facewarp::testing::random_vec3(rng, -0.03, 0.03);
    }
    const TpsWarp3D w = refit_toward(mesh, WarpChain{}, targets);
    const Points3 moved = apply_warp(w, mesh.gather(mesh.vertices, mesh.landmark_vertices()));
    for (std::size_t i = 0; i < moved.size(); ++i) {
        CHECK((moved[i] - targets[i]).norm() < 1e-8);
    }
    targets.pop_back();
    CHECK_THROWS_AS(refit_toward(mesh, WarpChain{}, targets), ArgumentError);
}

TEST_CASE("DLT recovers a camera from exact correspondences") {
    Rng rng(17);
    const FaceMesh& mesh = face();
    const Points3 pts = mesh.gather(mesh.vertices, mesh.landmark_vertices());
    for (int trial = 0; trial < 20; ++trial) {
        const CameraParams cam = random_view(rng);
        const CameraParams est = estimate_camera_dlt(pts, project(cam, pts));
        for (int k = 0; k < CameraParams::kSize; ++k) {
            CHECK(std::abs(est[k] - cam[k]) < 1e-7 * std::max(1.0, std::abs(cam[k])));
        }
    }
    const Points3 few(pts.begin(), pts.begin() + 5);
    CHECK_THROWS_AS(estimate_camera_dlt(few, project(random_view(rng), few)), SingularSystem);
}

TEST_CASE("yaw read back from view cameras") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        ViewPose pose;
        pose.yaw_deg = uniform(rng, -89.0, 89.0);
        pose.pitch_deg = uniform(rng, -15.0, 15.0);
        pose.roll_deg = uniform(rng, -10.0, 10.0);
        pose.scale = 20.0;
        pose.center = Vec2(32, 32);
        CHECK(estimate_yaw_degrees(view_camera(pose)) == doctest::Approx(std::abs(pose.yaw_deg)).epsilon(1e-9));
        pose.perspective = 0.0;
        CHECK(estimate_yaw_degrees(view_camera(pose)) == doctest::Approx(std::abs(pose.yaw_deg)).epsilon(1e-9));
    }
}
