#pragma once

#include "facewarp/estimator.hpp"
#include "facewarp/mesh.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace facewarp {

struct SynthConfig {
    int image_size = 64;
    /// Rendered at this factor and box-filtered down.
    int supersample = 2;
    double max_pitch_deg = 15.0;
    double max_roll_deg = 10.0;
    double scale = 19.0;
    /// Relative jitter of the scale.
    double scale_jitter = 0.1;
    /// Image-center jitter in pixels.
    double center_jitter = 3.0;
    double perspective = 0.1;
    double perspective_jitter = 0.02;
    /// Largest control displacement as a fraction of the mesh bounding-box
    /// diagonal (at most 0.1).
    double displacement_fraction = 0.04;
    double background = 0.05;

    void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Absolute-yaw bin: 0 for [0, 30], 1 for (30, 60], 2 for (60, 90].
int pose_bin(double yaw_deg);

/// `count` samples, sample i drawn from its own stream seeded by (seed, i),
/// so any subset regenerates identically. Absolute yaw cycles through the
/// three pose bins (i mod 3) with a random sign.
std::vector<TrainSample> synth_generate(const FaceMesh& mesh, const SynthConfig& config, std::size_t count,
                                        std::uint64_t seed);

/// Flat-shaded, headlight-lit gray render of the warped mesh.
Grid2D render_face(const FaceMesh& mesh, std::span<const Point3> warped_vertices, const CameraParams& cam,
                   const SynthConfig& config);

/// Directory layout: mesh.obj (+ sidecar), samples.jsonl (one record per
/// sample: id, image, camera, warp, landmarks, yaw_deg, bbox) and images/.
void save_dataset(const FaceMesh& mesh, std::span<const TrainSample> samples, const std::filesystem::path& dir);

struct Dataset {
    FaceMesh mesh;
    std::vector<TrainSample> samples;
};
/// Recomputes true_vertices from each warp. Throws IoError / ParseError.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace facewarp
