#include "facewarp/metrics.hpp"

#include "facewarp/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

namespace facewarp {

namespace {

int bin_of(double yaw_deg) {
    const double a = std::abs(yaw_deg);
    return a <= 30.0 ? 0 : (a <= 60.0 ? 1 : 2);
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    out << std::setprecision(10);
    return out;
}

}  // namespace

std::string to_string(NmeMode mode) { return mode == NmeMode::Visible ? "visible" : "all"; }

NmeMode nme_mode_from_string(const std::string& name) {
    if (name == "visible") {
        return NmeMode::Visible;
    }
    if (name == "all") {
        return NmeMode::All;
    }
    throw ArgumentError("unknown NME mode '" + name + "' (expected visible or all)");
}

NmeRecord make_record(const std::string& id, const LandmarkSet2D& pred, const LandmarkSet2D& truth,
                      const BBox& bbox, double yaw_deg, NmeMode mode) {
    pred.check_compatible(truth);
    if (!(bbox.w > 0) || !(bbox.h > 0)) {
        throw ArgumentError("bounding box must have positive width and height");
    }
    NmeRecord r{id, {}, bbox.w, bbox.h, bin_of(yaw_deg), 0.0};
    double sum = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mode == NmeMode::Visible && !truth.points[i].visible) {
            r.errors.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double e = (pred.points[i].pos - truth.points[i].pos).norm();
        r.errors.push_back(e);
        sum += e;
        ++used;
    }
    if (used == 0) {
        throw NoLandmarks("sample '" + id + "' has no landmarks to evaluate in " + to_string(mode) + " mode");
    }
    r.nme = sum / used / std::sqrt(bbox.w * bbox.h);
    return r;
}

double nme(const LandmarkSet2D& pred, const LandmarkSet2D& truth, const BBox& bbox, NmeMode mode) {
    return make_record("", pred, truth, bbox, 0.0, mode).nme;
}

PoseTable pose_summary(const std::array<std::optional<double>, 3>& bin_means) {
    PoseTable t;
    t.bin_mean = bin_means;
    std::vector<double> present;
    for (const auto& m : bin_means) {
        if (m) {
            present.push_back(*m);
        }
    }
    if (present.empty()) {
        throw ArgumentError("pose table needs at least one populated bin");
    }
    t.mean = std::accumulate(present.begin(), present.end(), 0.0) / static_cast<double>(present.size());
    if (present.size() < 2) {
        t.std = std::numeric_limits<double>::quiet_NaN();
    } else {
        double ss = 0.0;
        for (double v : present) {
            ss += (v - t.mean) * (v - t.mean);
        }
        t.std = std::sqrt(ss / static_cast<double>(present.size() - 1));
    }
    return t;
}

PoseTable pose_table(std::span<const NmeRecord> records) {
    if (records.empty()) {
        throw ArgumentError("pose table needs at least one record");
    }
    std::array<double, 3> sum{};
    std::array<std::size_t, 3> count{};
    for (const auto& r : records) {
        sum[static_cast<std::size_t>(r.pose_bin)] += 100.0 * r.nme;
        ++count[static_cast<std::size_t>(r.pose_bin)];
    }
    std::array<std::optional<double>, 3> means;
    for (std::size_t b = 0; b < 3; ++b) {
        if (count[b] > 0) {
            means[b] = sum[b] / static_cast<double>(count[b]);
        }
    }
    PoseTable t = pose_summary(means);
    t.bin_count = count;
    return t;
}

std::vector<double> threshold_grid(double max_nme, int steps) {
    if (!(max_nme > 0) || steps < 1) {
        throw ArgumentError("threshold grid needs max > 0 and steps >= 1");
    }
    std::vector<double> t(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        t[static_cast<std::size_t>(i)] = max_nme * i / steps;
    }
    return t;
}

CedCurve ced(std::span<const NmeRecord> records, std::span<const double> thresholds) {
    if (records.empty()) {
        throw ArgumentError("CED needs at least one record");
    }
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) {
        values.push_back(r.nme);
    }
    std::sort(values.begin(), values.end());
    CedCurve c;
    c.thresholds.assign(thresholds.begin(), thresholds.end());
    std::sort(c.thresholds.begin(), c.thresholds.end());
    for (double t : c.thresholds) {
        const auto n = std::upper_bound(values.begin(), values.end(), t) - values.begin();
        c.fractions.push_back(static_cast<double>(n) / static_cast<double>(values.size()));
    }
    return c;
}

CedCurve ced_balanced(std::span<const NmeRecord> records, std::span<const double> thresholds, int resamples,
                      std::uint64_t seed) {
    if (records.empty()) {
        throw ArgumentError("CED needs at least one record");
    }
    if (resamples < 1) {
        throw ArgumentError("resamples must be >= 1");
    }
    std::array<std::vector<std::size_t>, 3> bins;
    for (std::size_t i = 0; i < records.size(); ++i) {
        bins[static_cast<std::size_t>(records[i].pose_bin)].push_back(i);
    }
    std::size_t per_bin = records.size();
    for (const auto& b : bins) {
        if (!b.empty()) {
            per_bin = std::min(per_bin, b.size());
        }
    }
    std::mt19937_64 rng(seed);
    CedCurve avg;
    for (int k = 0; k < resamples; ++k) {
        std::vector<NmeRecord> subset;
        for (auto& b : bins) {
            std::shuffle(b.begin(), b.end(), rng);
            for (std::size_t j = 0; j < std::min(per_bin, b.size()); ++j) {
                subset.push_back(records[b[j]]);
            }
        }
        const CedCurve c = ced(subset, thresholds);
        if (k == 0) {
            avg = c;
        } else {
            for (std::size_t i = 0; i < c.fractions.size(); ++i) {
                avg.fractions[i] += c.fractions[i];
            }
        }
    }
    for (auto& f : avg.fractions) {
        f /= resamples;
    }
    return avg;
}

void write_records_csv(std::span<const NmeRecord> records, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "id,pose_bin,bbox_w,bbox_h,nme_percent,errors\n";
    for (const auto& r : records) {
        out << r.id << ',' << kPoseBinNames[static_cast<std::size_t>(r.pose_bin)] << ',' << r.bbox_w << ','
            << r.bbox_h << ',' << 100.0 * r.nme << ',';
        for (std::size_t i = 0; i < r.errors.size(); ++i) {
            out << (i ? ";" : "");
            if (std::isnan(r.errors[i])) {
                out << "nan";
            } else {
                out << r.errors[i];
            }
        }
        out << '\n';
    }
}

void write_ced_csv(const CedCurve& curve, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "nme_percent,fraction\n";
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        out << 100.0 * curve.thresholds[i] << ',' << curve.fractions[i] << '\n';
    }
}

void write_pose_table_csv(const PoseTable& table, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "bin,count,nme_percent\n";
    for (std::size_t b = 0; b < 3; ++b) {
        out << kPoseBinNames[b] << ',' << table.bin_count[b] << ',';
        if (table.bin_mean[b]) {
            out << *table.bin_mean[b];
        }
        out << '\n';
    }
    out << "mean,," << table.mean << '\n';
    out << "std,," << table.std << '\n';
}

}  // namespace facewarp
