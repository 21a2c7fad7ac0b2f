#include "facewarp/error.hpp"
#include "facewarp/landmarks.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace facewarp;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "facewarp_test_landmarks";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("scheme names") {
    CHECK(scheme_from_string("aflw21") == LandmarkScheme::Aflw21);
    CHECK(scheme_from_string(to_string(LandmarkScheme::Mpie68)) == LandmarkScheme::Mpie68);
    CHECK(landmark_count(LandmarkScheme::Aflw21) == 21);
    CHECK(landmark_count(LandmarkScheme::Mpie68) == 68);
    CHECK_THROWS_AS(scheme_from_string("ibug"), ArgumentError);
}

TEST_CASE("json round trip keeps ids, positions and visibility") {
    LandmarkSet2D set{LandmarkScheme::Aflw21, {}};
    for (int i = 1; i <= 21; ++i) {
        set.points.push_back({i, Point2(i * 1.25, -i / 3.0), i % 4 != 0});
    }
    const auto path = scratch("rt.json");
    save_landmarks(set, path);
    const LandmarkSet2D back = load_landmarks(path);
    CHECK(back.scheme == set.scheme);
    REQUIRE(back.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(back.points[i].id == set.points[i].id);
        CHECK(back.points[i].pos == set.points[i].pos);
        CHECK(back.points[i].visible == set.points[i].visible);
    }
    CHECK_NOTHROW(back.check_compatible(set));
}

TEST_CASE("pts files") {
    std::string text = "version: 1\nn_points: 21\n{\n";
    for (int i = 0; i < 21; ++i) {
        text += std::to_string(i) + ".5 " + std::to_string(2 * i) + "\n";
    }
    write_text(scratch("a.pts"), text + "}\n");
    const LandmarkSet2D set = load_landmarks(scratch("a.pts"));
    CHECK(set.scheme == LandmarkScheme::Aflw21);
    REQUIRE(set.size() == 21);
    CHECK(set.points[3].id == 4);
    CHECK(set.points[3].pos == Point2(3.5, 6.0));
    CHECK(set.points[3].visible);

    write_text(scratch("b.pts"), text);
    CHECK_THROWS_AS(load_landmarks(scratch("b.pts")), ParseError);
    write_text(scratch("c.pts"), "version: 1\nn_points: 3\n{\n1 2\n3 4\n5 6\n}\n");
    CHECK_THROWS_AS(load_landmarks(scratch("c.pts")), ParseError);
    CHECK_THROWS_AS(load_landmarks(scratch("missing.pts")), IoError);
}

TEST_CASE("compatibility checks") {
    LandmarkSet2D a{LandmarkScheme::Aflw21, {{1, Point2(0, 0), true}, {2, Point2(1, 1), true}}};
    LandmarkSet2D b = a;
    b.points[1].id = 3;
    CHECK_THROWS_AS(a.check_compatible(b), SchemeMismatch);
    b = a;
    b.scheme = LandmarkScheme::Mpie68;
    CHECK_THROWS_AS(a.check_compatible(b), SchemeMismatch);
}
