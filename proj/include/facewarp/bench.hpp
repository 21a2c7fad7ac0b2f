#pragma once

#include "facewarp/mesh.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>

namespace facewarp {

struct BenchReport {
    std::string pipeline;
    std::size_t items = 0;
    int warmup = 0;
    int reps = 0;
    /// Per-item latency in seconds over all timed runs.
    double mean_s = 0.0;
    double p50_s = 0.0;
    double p99_s = 0.0;
    double faces_per_second = 0.0;
};

void to_json(nlohmann::json& j, const BenchReport& r);

/// Times run(i) for every item, one at a time on a single thread: `warmup`
/// untimed passes over the items, then `reps` timed passes. Throws
/// ArgumentError when there are no items or reps < 1.
BenchReport bench(const std::string& pipeline, std::size_t items, const std::function<void(std::size_t)>& run,
                  int warmup, int reps);

/// Mesh used by the geometry benchmark: the procedural face at 224 x 224
/// vertices (50,176).
FaceMesh bench_mesh();

/// TPS apply over every vertex, projection and z-buffered visibility for a
/// random warp and view per item.
BenchReport bench_geometry(const FaceMesh& mesh, std::size_t items, int warmup, int reps, std::uint64_t seed);

}  // namespace facewarp
