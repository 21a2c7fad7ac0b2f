#include "facewarp/sampler.hpp"

#include "facewarp/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace facewarp {

namespace {

// Neighbouring texels and weights of one clamped sample along one axis.
struct AxisSpan {
    int lo = 0;
    int hi = 0;
    double frac = 0.0;   // weight of `hi`
    bool clamped = false;
};

AxisSpan axis_span(double v, int size) {
    if (!std::isfinite(v)) {
        throw ArgumentError("sample coordinate is not finite");
    }
    AxisSpan s;
    const double max = static_cast<double>(size - 1);
    if (size == 1 || v < 0.0 || v > max) {
        s.clamped = true;
        s.lo = s.hi = (size == 1 || v < 0.0) ? 0 : size - 1;
        return s;
    }
    s.lo = std::min(static_cast<int>(std::floor(v)), size - 2);
    s.hi = s.lo + 1;
    s.frac = v - s.lo;
    return s;
}

void check_grad_shape(const Grid2D& grid, std::size_t coords, std::span<const ChannelVector> dL_dO) {
    if (dL_dO.size() != coords) {
        throw ArgumentError("dL/dO has " + std::to_string(dL_dO.size()) + " entries for " +
                            std::to_string(coords) + " coordinates");
    }
    for (const auto& g : dL_dO) {
        if (g.size() != grid.channels()) {
            throw ArgumentError("dL/dO channel count does not match the grid");
        }
    }
}

struct PngFile {
    std::FILE* fp = nullptr;
    ~PngFile() {
        if (fp != nullptr) {
            std::fclose(fp);
        }
    }
};

}  // namespace

Grid2D::Grid2D(int width, int height, int channels, double fill)
    : Grid2D(width, height, channels,
             std::vector<double>(static_cast<std::size_t>(std::max(0, width)) *
                                     static_cast<std::size_t>(std::max(0, height)) *
                                     static_cast<std::size_t>(std::max(0, channels)),
                                 fill)) {}

Grid2D::Grid2D(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width <= 0 || height <= 0 || channels <= 0) {
        throw ArgumentError("grid dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                            static_cast<std::size_t>(channels)) {
        throw ArgumentError("grid data length does not match width*height*channels");
    }
}

std::vector<ChannelVector> sample_bilinear(const Grid2D& grid, std::span<const SampleCoord> coords) {
    std::vector<ChannelVector> out;
    out.reserve(coords.size());
    const int c = grid.channels();
    for (const auto& p : coords) {
        const AxisSpan sx = axis_span(p.x(), grid.width());
        const AxisSpan sy = axis_span(p.y(), grid.height());
        const double w00 = (1.0 - sx.frac) * (1.0 - sy.frac);
        const double w01 = sx.frac * (1.0 - sy.frac);
        const double w10 = (1.0 - sx.frac) * sy.frac;
        const double w11 = sx.frac * sy.frac;
        ChannelVector v(c);
        for (int k = 0; k < c; ++k) {
            v[k] = w00 * grid.at(sy.lo, sx.lo, k) + w01 * grid.at(sy.lo, sx.hi, k) +
                   w10 * grid.at(sy.hi, sx.lo, k) + w11 * grid.at(sy.hi, sx.hi, k);
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<Vec2> grad_wrt_coords(const Grid2D& grid, std::span<const SampleCoord> coords,
                                  std::span<const ChannelVector> dL_dO) {
    check_grad_shape(grid, coords.size(), dL_dO);
    std::vector<Vec2> out(coords.size(), Vec2::Zero());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const AxisSpan sx = axis_span(coords[i].x(), grid.width());
        const AxisSpan sy = axis_span(coords[i].y(), grid.height());
        double gx = 0.0;
        double gy = 0.0;
        for (int k = 0; k < grid.channels(); ++k) {
            const double v00 = grid.at(sy.lo, sx.lo, k);
            const double v01 = grid.at(sy.lo, sx.hi, k);
            const double v10 = grid.at(sy.hi, sx.lo, k);
            const double v11 = grid.at(sy.hi, sx.hi, k);
            const double dx = (1.0 - sy.frac) * (v01 - v00) + sy.frac * (v11 - v10);
            const double dy = (1.0 - sx.frac) * (v10 - v00) + sx.frac * (v11 - v01);
            gx += dL_dO[i][k] * dx;
            gy += dL_dO[i][k] * dy;
        }
        out[i] = Vec2(sx.clamped ? 0.0 : gx, sy.clamped ? 0.0 : gy);
    }
    return out;
}

Grid2D grad_wrt_values(const Grid2D& grid, std::span<const SampleCoord> coords,
                       std::span<const ChannelVector> dL_dO) {
    check_grad_shape(grid, coords.size(), dL_dO);
    Grid2D out(grid.width(), grid.height(), grid.channels());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const AxisSpan sx = axis_span(coords[i].x(), grid.width());
        const AxisSpan sy = axis_span(coords[i].y(), grid.height());
        const double w00 = (1.0 - sx.frac) * (1.0 - sy.frac);
        const double w01 = sx.frac * (1.0 - sy.frac);
        const double w10 = (1.0 - sx.frac) * sy.frac;
        const double w11 = sx.frac * sy.frac;
        for (int k = 0; k < grid.channels(); ++k) {
            const double g = dL_dO[i][k];
            out.at(sy.lo, sx.lo, k) += w00 * g;
            out.at(sy.lo, sx.hi, k) += w01 * g;
            out.at(sy.hi, sx.lo, k) += w10 * g;
            out.at(sy.hi, sx.hi, k) += w11 * g;
        }
    }
    return out;
}

Grid2D load_png(const std::filesystem::path& path) {
    PngFile file{std::fopen(path.c_str(), "rb")};
    if (file.fp == nullptr) {
        throw IoError("cannot open " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("malformed PNG " + path.string());
    }
    png_init_io(png, file.fp);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if ((color & PNG_COLOR_MASK_ALPHA) != 0) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * height);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) {
        rows[r] = pixels.data() + r * stride;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Grid2D grid(static_cast<int>(width), static_cast<int>(height), channels);
    for (png_uint_32 r = 0; r < height; ++r) {
        for (png_uint_32 c = 0; c < width; ++c) {
            for (int k = 0; k < channels; ++k) {
                grid.at(static_cast<int>(r), static_cast<int>(c), k) =
                    rows[r][c * static_cast<png_uint_32>(channels) + static_cast<png_uint_32>(k)] / 255.0;
            }
        }
    }
    return grid;
}

void save_png(const Grid2D& grid, const std::filesystem::path& path) {
    if (grid.channels() != 1 && grid.channels() != 3) {
        throw ArgumentError("PNG output supports 1 or 3 channels");
    }
    PngFile file{std::fopen(path.c_str(), "wb")};
    if (file.fp == nullptr) {
        throw IoError("cannot create " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    const auto stride = static_cast<std::size_t>(grid.width()) * static_cast<std::size_t>(grid.channels());
    std::vector<png_byte> pixels(stride * static_cast<std::size_t>(grid.height()));
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        pixels[i] = static_cast<png_byte>(std::lround(std::clamp(grid.data()[i], 0.0, 1.0) * 255.0));
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(grid.height()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        rows[r] = pixels.data() + r * stride;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(grid.width()), static_cast<png_uint_32>(grid.height()), 8,
                 grid.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {
constexpr char kRawMagic[8] = {'F', 'W', 'G', 'R', 'I', 'D', '0', '1'};
}

Grid2D load_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    char magic[8];
    std::int32_t dims[3];
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::memcmp(magic, kRawMagic, sizeof magic) != 0) {
        throw IoError(path.string() + " is not a raw grid container");
    }
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
        throw IoError(path.string() + ": invalid grid dimensions");
    }
    std::vector<double> data(static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
                             static_cast<std::size_t>(dims[2]));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) {
        throw IoError(path.string() + ": truncated grid data");
    }
    return Grid2D(dims[0], dims[1], dims[2], std::move(data));
}

void save_raw(const Grid2D& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    const std::int32_t dims[3] = {grid.width(), grid.height(), grid.channels()};
    out.write(kRawMagic, sizeof kRawMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(grid.data().data()),
              static_cast<std::streamsize>(grid.data().size() * sizeof(double)));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace facewarp
