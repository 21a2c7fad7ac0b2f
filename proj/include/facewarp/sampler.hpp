#pragma once

#include "facewarp/types.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <vector>

namespace facewarp {

// Coordinate convention shared by texture and feature sampling: (x, y) =
// (column, row), origin at the top-left texel, integer coordinates at texel
// centers. Texel (r, c) therefore covers [c - 0.5, c + 0.5] x [r - 0.5, r + 0.5].
// Coordinates outside [0, w-1] x [0, h-1] clamp to the border.

/// Dense (row, col, channel) grid of reals.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int width, int height, int channels, double fill = 0.0);
    Grid2D(int width, int height, int channels, std::vector<double> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }

    double at(int row, int col, int channel = 0) const {
        return data_[index(row, col, channel)];
    }
    double& at(int row, int col, int channel = 0) { return data_[index(row, col, channel)]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    std::size_t index(int row, int col, int channel) const {
        return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(col)) * static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(channel);
    }

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

using SampleCoord = Vec2;
using ChannelVector = Eigen::VectorXd;

std::vector<ChannelVector> sample_bilinear(const Grid2D& grid, std::span<const SampleCoord> coords);

/// dL/d(x, y) per coordinate. The derivative along an axis is zero where that
/// axis is clamped. Exactly on an interior gridline the right-hand cell is used.
std::vector<Vec2> grad_wrt_coords(const Grid2D& grid, std::span<const SampleCoord> coords,
                                  std::span<const ChannelVector> dL_dO);

/// dL/d(grid values): the bilinear weights scattered back into a grid of the
/// same shape.
Grid2D grad_wrt_values(const Grid2D& grid, std::span<const SampleCoord> coords,
                       std::span<const ChannelVector> dL_dO);

/// 8-bit gray/gray-alpha/RGB/RGBA PNG, scaled to [0, 1]. Alpha is dropped.
Grid2D load_png(const std::filesystem::path& path);
/// Writes 1 or 3 channel grids, clamping values to [0, 1].
void save_png(const Grid2D& grid, const std::filesystem::path& path);

/// Raw feature container: magic "FWGRID01", int32 width, height, channels,
/// then width*height*channels little-endian float64 values in (row, col, channel) order.
Grid2D load_raw(const std::filesystem::path& path);
void save_raw(const Grid2D& grid, const std::filesystem::path& path);

}  // namespace facewarp
