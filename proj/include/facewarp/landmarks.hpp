#pragma once

#include "facewarp/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace facewarp {

enum class LandmarkScheme { Aflw21, Mpie68 };

std::string to_string(LandmarkScheme scheme);
/// Accepts "aflw21" and "mpie68".
LandmarkScheme scheme_from_string(const std::string& name);
int landmark_count(LandmarkScheme scheme);

struct Landmark2D {
    int id = 0;
    Point2 pos = Point2::Zero();
    bool visible = true;
};

/// Image-plane landmarks with semantic ids (1-based, ordered by id).
struct LandmarkSet2D {
    LandmarkScheme scheme = LandmarkScheme::Mpie68;
    std::vector<Landmark2D> points;

    std::size_t size() const { return points.size(); }
    Points2 positions() const;
    /// Throws SchemeMismatch when the schemes or ids differ.
    void check_compatible(const LandmarkSet2D& other) const;
};

void to_json(nlohmann::json& j, const LandmarkSet2D& set);
void from_json(const nlohmann::json& j, LandmarkSet2D& set);

/// Reads the JSON format, or the whitespace "pts" text format ("version: 1",
/// "n_points: N", "{", N lines of "x y", "}"). pts files carry no visibility
/// and their scheme is inferred from the point count.
LandmarkSet2D load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSet2D& set, const std::filesystem::path& path);

}  // namespace facewarp
