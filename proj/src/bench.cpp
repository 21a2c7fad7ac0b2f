#include "facewarp/bench.hpp"

#include "facewarp/error.hpp"
#include "facewarp/parallel.hpp"
#include "facewarp/tps.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace facewarp {

void to_json(nlohmann::json& j, const BenchReport& r) {
    j = {{"pipeline", r.pipeline}, {"items", r.items},   {"warmup", r.warmup},
         {"reps", r.reps},         {"mean_s", r.mean_s}, {"p50_s", r.p50_s},
         {"p99_s", r.p99_s},       {"faces_per_second", r.faces_per_second}};
}

BenchReport bench(const std::string& pipeline, std::size_t items, const std::function<void(std::size_t)>& run,
                  int warmup, int reps) {
    if (items == 0) {
        throw ArgumentError("bench needs at least one item");
    }
    if (reps < 1 || warmup < 0) {
        throw ArgumentError("bench needs reps >= 1 and warmup >= 0");
    }
    const ScopedThreadOverride single(1);
    for (int w = 0; w < warmup; ++w) {
        for (std::size_t i = 0; i < items; ++i) {
            run(i);
        }
    }
    std::vector<double> t;
    t.reserve(items * static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < items; ++i) {
            const auto start = std::chrono::steady_clock::now();
            run(i);
            t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
    }
    std::sort(t.begin(), t.end());
    const auto quantile = [&](double q) {
        const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(t.size()))) - 1;
        return t[std::min(k, t.size() - 1)];
    };
    BenchReport r{pipeline, items, warmup, reps};
    r.mean_s = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
    r.p50_s = quantile(0.5);
    r.p99_s = quantile(0.99);
    r.faces_per_second = r.mean_s > 0 ? 1.0 / r.mean_s : 0.0;
    return r;
}

FaceMesh bench_mesh() {
    SyntheticFaceOptions options;
    options.rows = 224;
    options.cols = 224;
    return make_synthetic_face(options);
}

BenchReport bench_geometry(const FaceMesh& mesh, std::size_t items, int warmup, int reps, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const Points3 controls = mesh.control_points();
    std::vector<TpsWarp3D> warps;
    std::vector<CameraParams> cams;
    for (std::size_t i = 0; i < items; ++i) {
        std::vector<ControlCorrespondence> corr;
        for (const auto& c : controls) {
            corr.push_back({c, c + 0.05 * Point3(unit(rng), unit(rng), unit(rng))});
        }
        warps.push_back(fit(corr));
        ViewPose pose;
        pose.yaw_deg = 80.0 * unit(rng);
        pose.pitch_deg = 15.0 * unit(rng);
        pose.scale = 100.0;
        pose.center = Vec2(128, 128);
        cams.push_back(view_camera(pose));
    }
    std::size_t sink = 0;
    BenchReport r = bench(
        "geometry", items,
        [&](std::size_t i) {
            const Points3 moved = apply_warp(warps[i], mesh.vertices);
            const Points2 image = project(cams[i], moved);
            const VisibilityMask mask = visibility(mesh, moved, cams[i]);
            sink += image.size() + static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
        },
        warmup, reps);
    if (sink == 0) {
        throw ArgumentError("geometry benchmark produced no output");
    }
    return r;
}

}  // namespace facewarp
