#pragma once

#include "facewarp/landmarks.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace facewarp {

enum class NmeMode { Visible, All };
std::string to_string(NmeMode mode);
/// "visible" or "all".
NmeMode nme_mode_from_string(const std::string& name);

struct BBox {
    double w = 0.0;
    double h = 0.0;
};

/// Mean landmark error over the selected landmarks divided by sqrt(w h).
/// Visible mode uses the truth's visibility flags. Throws SchemeMismatch,
/// ArgumentError for a non-positive box and NoLandmarks for an empty selection.
double nme(const LandmarkSet2D& pred, const LandmarkSet2D& truth, const BBox& bbox, NmeMode mode);

inline constexpr std::array<const char*, 3> kPoseBinNames{"[0,30]", "(30,60]", "(60,90]"};

struct NmeRecord {
    std::string id;
    /// Per-landmark pixel errors, NaN for landmarks left out by the mode.
    std::vector<double> errors;
    double bbox_w = 0.0;
    double bbox_h = 0.0;
    int pose_bin = 0;
    /// Fraction, not percent.
    double nme = 0.0;
};

NmeRecord make_record(const std::string& id, const LandmarkSet2D& pred, const LandmarkSet2D& truth,
                      const BBox& bbox, double yaw_deg, NmeMode mode);

struct PoseTable {
    /// Mean NME in percent per bin; empty bins are absent.
    std::array<std::optional<double>, 3> bin_mean;
    std::array<std::size_t, 3> bin_count{};
    /// Mean of the present bin means and their sample standard deviation
    /// (n - 1 in the denominator; NaN with fewer than two bins).
    double mean = 0.0;
    double std = 0.0;
};

/// Summary row from already-computed bin means (percent).
PoseTable pose_summary(const std::array<std::optional<double>, 3>& bin_means);
/// Throws ArgumentError for an empty record list.
PoseTable pose_table(std::span<const NmeRecord> records);

struct CedCurve {
    /// Ascending NME thresholds (fractions) and the share of samples at or below each.
    std::vector<double> thresholds;
    std::vector<double> fractions;
};

/// Evenly spaced thresholds 0, max/steps, ..., max.
std::vector<double> threshold_grid(double max_nme, int steps);

/// Throws ArgumentError for an empty record list.
CedCurve ced(std::span<const NmeRecord> records, std::span<const double> thresholds);

/// Averages `resamples` CED curves, each over a pose-balanced subset: every
/// non-empty bin contributes the same number of records (the smallest bin
/// size), drawn without replacement. Deterministic for a given seed.
CedCurve ced_balanced(std::span<const NmeRecord> records, std::span<const double> thresholds, int resamples,
                      std::uint64_t seed);

void write_records_csv(std::span<const NmeRecord> records, const std::filesystem::path& path);
void write_ced_csv(const CedCurve& curve, const std::filesystem::path& path);
void write_pose_table_csv(const PoseTable& table, const std::filesystem::path& path);

}  // namespace facewarp
