#include "facewarp/error.hpp"
#include "facewarp/mesh.hpp"
#include "facewarp/tps.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace facewarp;
using namespace facewarp::testing;

namespace {

FaceMesh plane_mesh(int n) {
    FaceMesh m;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            m.vertices.emplace_back(-1.0 + 2.0 * j / (n - 1), 1.0 - 2.0 * i / (n - 1), 0.0);
        }
    }
    for (int i = 0; i + 1 < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
            const int a = i * n + j;
            m.faces.push_back({a, a + n, a + n + 1});
            m.faces.push_back({a, a + n + 1, a + 1});
        }
    }
    return m;
}

}  // namespace

TEST_CASE("vertex normals") {
    FaceMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.faces = {{0, 1, 2}};
    for (const auto& n : vertex_normals(tri)) {
        CHECK((n - Vec3::UnitZ()).norm() < 1e-15);
    }

    FaceMesh tet;
    tet.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    tet.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    for (auto& f : tet.faces) {
        const Vec3 n = (tet.vertices[f[1]] - tet.vertices[f[0]]).cross(tet.vertices[f[2]] - tet.vertices[f[0]]);
        if (n.dot(tet.vertices[f[0]]) < 0) std::swap(f[1], f[2]);
    }
    tet.validate();
    const Points3 tn = vertex_normals(tet);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK((tn[i] - tet.vertices[i].normalized()).norm() < 1e-12);
    }

    const FaceMesh sphere = make_icosphere(3);
    const Points3 sn = vertex_normals(sphere);
    for (std::size_t i = 0; i < sn.size(); ++i) {
        const double angle = std::acos(std::clamp(sn[i].dot(sphere.vertices[i].normalized()), -1.0, 1.0));
        CHECK(angle * 180.0 / std::numbers::pi < 2.0);
    }
}

TEST_CASE("camera center") {
    const CameraParams shifted({1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    const Point3 c1 = estimate_camera_center(shifted);
    CHECK((c1 - Point3(0, 0, -1)).norm() < 1e-15);

    // A view camera sits on the rotated +z axis at distance 1/perspective.
    ViewPose pose;
    pose.yaw_deg = 30;
    pose.pitch_deg = -10;
    pose.scale = 40;
    pose.center = Vec2(12, -5);
    pose.perspective = 0.25;
    const Point3 c2 = estimate_camera_center(view_camera(pose));
    CHECK((c2 - view_rotation(pose).transpose() * Vec3(0, 0, 4.0)).norm() < 1e-12);

    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const CameraParams cam = random_camera(rng);
        const Point3 c = estimate_camera_center(cam);
        const Vec3 image = cam.to_matrix() * homogeneous(c);
        CHECK(image.cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK_THROWS_AS(estimate_camera_center(CameraParams({1, 2, 3, 0, 2, 4, 6, 0, 0, 0, 0})), SingularA);
}

TEST_CASE("visibility of planes") {
    const FaceMesh plane = plane_mesh(9);
    ViewPose front;
    front.scale = 30;
    front.center = Vec2(32, 32);
    front.perspective = 0.2;
    const VisibilityMask all = visibility(plane, plane.vertices, view_camera(front));
    CHECK(std::all_of(all.begin(), all.end(), [](bool v) { return v; }));

    ViewPose back = front;
    back.yaw_deg = 180;
    const VisibilityMask none = visibility(plane, plane.vertices, view_camera(back));
    CHECK(std::none_of(none.begin(), none.end(), [](bool v) { return v; }));
}

TEST_CASE("convex icosphere: z-buffer agrees with the normal test and the ray oracle") {
    const FaceMesh sphere = make_icosphere(3);
    REQUIRE(sphere.faces.size() <= 1280);
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const CameraParams cam = random_outside_camera(rng);
        const VisibilityMask full = visibility(sphere, sphere.vertices, cam);
        const VisibilityMask normal_only = visibility(sphere, sphere.vertices, cam, {.zbuffer = false});
        const VisibilityMask oracle = oracle_visibility(sphere, sphere.vertices, estimate_camera_center(cam));
        CHECK(full == normal_only);
        CHECK(full == oracle);
    }
}

TEST_CASE("visibility is invariant to rescaling the scene") {
    const FaceMesh face = make_synthetic_face({.rows = 31, .cols = 31});
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        ViewPose pose;
        pose.yaw_deg = uniform(rng, -80, 80);
        pose.scale = 25;
        pose.center = Vec2(32, 32);
        const CameraParams cam = view_camera(pose);
        const double s = uniform(rng, 0.1, 10.0);
        Points3 scaled = face.vertices;
        for (auto& v : scaled) v *= s;
        Matrix34 m = cam.to_matrix();
        m.leftCols<3>() /= s;
        const VisibilityMask a = visibility(face, face.vertices, cam);
        const VisibilityMask b = visibility(face, scaled, CameraParams::from_matrix(m));
        CHECK(a == b);
    }
}

TEST_CASE("non-convex face: the z-buffer hides the far cheek behind the nose") {
    const FaceMesh face = make_synthetic_face();
    ViewPose pose;
    pose.yaw_deg = 65;
    pose.scale = 22;
    pose.center = Vec2(32, 32);
    const CameraParams cam = view_camera(pose);
    const VisibilityMask full = visibility(face, face.vertices, cam);
    const VisibilityMask normal_only = visibility(face, face.vertices, cam, {.zbuffer = false});
    std::size_t hidden_by_zbuffer = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        CHECK((!full[i] || normal_only[i]));
        hidden_by_zbuffer += normal_only[i] && !full[i];
    }
    CHECK(hidden_by_zbuffer > 0);

    const VisibilityMask oracle = oracle_visibility(face, face.vertices, estimate_camera_center(cam));
    std::size_t agree = 0;
    for (std::size_t i = 0; i < full.size(); ++i) agree += full[i] == oracle[i];
    CHECK(static_cast<double>(agree) / full.size() > 0.99);
}

TEST_CASE("synthetic mean face") {
    const FaceMesh face = make_synthetic_face();
    CHECK(face.vertices.size() == 71 * 71);
    CHECK(face.landmark_map.size() == 68);
    CHECK(face.control_indices.size() == 40);
    const auto lm = face.landmark_vertices();
    CHECK(std::set<int>(lm.begin(), lm.end()).size() == 68);
    // Controls are in general position.
    std::vector<ControlCorrespondence> c;
    for (const auto& p : face.control_points()) c.push_back({p, p});
    CHECK_NOTHROW(fit(c));
    // Nose tip protrudes beyond the cheeks.
    CHECK(face.vertices[static_cast<std::size_t>(face.landmark_map.at(31))].z() > 1.1);

    const FaceMesh aflw = make_synthetic_face({.scheme = LandmarkScheme::Aflw21});
    CHECK(aflw.landmark_map.size() == 21);
    CHECK(aflw.control_indices.size() == 40);
    CHECK(make_synthetic_face() .vertices == face.vertices);
}

TEST_CASE("mesh files round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "facewarp_mesh_test";
    std::filesystem::create_directories(dir);
    const FaceMesh face = make_synthetic_face({.rows = 20, .cols = 24});
    Rng rng(4);
    Points3 warped = face.vertices;
    for (auto& v : warped) v += random_vec3(rng, -0.1, 0.1);
    for (const char* name : {"face.obj", "face.ply"}) {
        save_mesh(face, warped, dir / name);
        const FaceMesh back = load_mesh(dir / name);
        REQUIRE(back.vertices.size() == warped.size());
        for (std::size_t i = 0; i < warped.size(); ++i) {
            CHECK((back.vertices[i] - warped[i]).cwiseAbs().maxCoeff() < 1e-6);
        }
        CHECK(back.faces == face.faces);
        CHECK(back.landmark_map == face.landmark_map);
        CHECK(back.control_indices == face.control_indices);
        CHECK(back.scheme == face.scheme);
    }
    CHECK(std::filesystem::exists(dir / "face.landmarks.json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("mesh parse and validation errors") {
    const auto dir = std::filesystem::temp_directory_path() / "facewarp_mesh_errors";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "bad.obj");
        out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 7\n";
    }
    try {
        (void)load_mesh(dir / "bad.obj");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
        CHECK(std::string(e.what()).find("face 1") != std::string::npos);
    }
    {
        // Three triangles sharing edge 0-1.
        std::ofstream out(dir / "fan.obj");
        out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\nf 1 5 2\n";
    }
    try {
        (void)load_mesh(dir / "fan.obj");
        FAIL("expected ManifoldError");
    } catch (const ManifoldError& e) {
        CHECK(!e.edges().empty());
        CHECK(e.edges().front() == std::pair<int, int>{0, 1});
    }
    CHECK_THROWS_AS(load_mesh(dir / "missing.obj"), IoError);
    CHECK_THROWS_AS(load_mesh(dir / "mesh.stl"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("bundled mean face matches the procedural generator") {
    const FaceMesh bundled = load_mesh(std::filesystem::path(FACEWARP_ASSET_DIR) / "mean_face.obj");
    const FaceMesh generated = make_synthetic_face();
    CHECK(bundled.vertices == generated.vertices);
    CHECK(bundled.faces == generated.faces);
    CHECK(bundled.scheme == generated.scheme);
    CHECK(bundled.landmark_map == generated.landmark_map);
    CHECK(bundled.control_indices == generated.control_indices);
}
