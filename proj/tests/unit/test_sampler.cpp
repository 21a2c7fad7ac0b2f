#include "facewarp/error.hpp"
#include "facewarp/sampler.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace facewarp;
using namespace facewarp::testing;

namespace {

Grid2D random_grid(Rng& rng, int w, int h, int c) {
    Grid2D g(w, h, c);
    for (auto& v : g.data()) {
        v = uniform(rng, -1, 1);
    }
    return g;
}

// Oracle: the four-weight formula written out per channel with its own clamping.
double oracle_sample(const Grid2D& g, double x, double y, int k) {
    x = std::clamp(x, 0.0, static_cast<double>(g.width() - 1));
    y = std::clamp(y, 0.0, static_cast<double>(g.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, g.width() - 1);
    const int y1 = std::min(y0 + 1, g.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    return g.at(y0, x0, k) * (1 - fx) * (1 - fy) + g.at(y0, x1, k) * fx * (1 - fy) +
           g.at(y1, x0, k) * (1 - fx) * fy + g.at(y1, x1, k) * fx * fy;
}

// Keeps a coordinate at least `margin` texels from every integer gridline.
double off_grid(Rng& rng, double lo, double hi, double margin) {
    for (;;) {
        const double v = uniform(rng, lo, hi);
        const double frac = v - std::floor(v);
        if (frac > margin && frac < 1.0 - margin) {
            return v;
        }
    }
}

}  // namespace

TEST_CASE("integer coordinates reproduce texels") {
    Rng rng(1);
    const Grid2D g = random_grid(rng, 6, 5, 3);
    const std::vector<SampleCoord> c{{2, 3}};
    const auto out = sample_bilinear(g, c);
    for (int k = 0; k < 3; ++k) {
        CHECK(out[0][k] == g.at(3, 2, k));
    }
    for (int r = 0; r < 5; ++r) {
        for (int col = 0; col < 6; ++col) {
            const std::vector<SampleCoord> p{{col, r}};
            CHECK(sample_bilinear(g, p)[0][1] == g.at(r, col, 1));
        }
    }
}

TEST_CASE("horizontal midpoint averages two texels") {
    Grid2D g(4, 2, 1);
    g.at(1, 1) = 0.2;
    g.at(1, 2) = 0.9;
    const std::vector<SampleCoord> c{{1.5, 1.0}};
    CHECK(sample_bilinear(g, c)[0][0] == doctest::Approx(0.55));
}

TEST_CASE("random samples match the scalar oracle, including out-of-bounds clamping") {
    Rng rng(2);
    const Grid2D g = random_grid(rng, 9, 7, 4);
    std::vector<SampleCoord> coords;
    for (int i = 0; i < 300; ++i) {
        coords.emplace_back(uniform(rng, -2, 10), uniform(rng, -2, 8));
    }
    const auto out = sample_bilinear(g, coords);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (int k = 0; k < 4; ++k) {
            CHECK(out[i][k] == doctest::Approx(oracle_sample(g, coords[i].x(), coords[i].y(), k)).epsilon(1e-13));
        }
    }
}

TEST_CASE("coordinate gradient: flat grid and linear ramp") {
    const Grid2D flat(5, 5, 2, 0.7);
    const std::vector<SampleCoord> c{{1.3, 2.6}, {3.9, 0.2}};
    const std::vector<ChannelVector> up(2, ChannelVector::Ones(2));
    for (const auto& g : grad_wrt_coords(flat, c, up)) {
        CHECK(g.isZero(0.0));
    }

    Grid2D ramp(6, 4, 1);
    for (int r = 0; r < 4; ++r) {
        for (int col = 0; col < 6; ++col) {
            ramp.at(r, col) = col;
        }
    }
    const std::vector<SampleCoord> p{{2.3, 1.6}};
    const auto g = grad_wrt_coords(ramp, p, std::vector<ChannelVector>(1, ChannelVector::Ones(1)));
    CHECK(g[0].x() == doctest::Approx(1.0));
    CHECK(g[0].y() == doctest::Approx(0.0));

    // Clamped axis carries no gradient.
    const std::vector<SampleCoord> outside{{-1.0, 1.5}};
    const auto go = grad_wrt_coords(ramp, outside, std::vector<ChannelVector>(1, ChannelVector::Ones(1)));
    CHECK(go[0].x() == 0.0);
}

TEST_CASE("coordinate gradient matches finite differences away from gridlines") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Grid2D g = random_grid(rng, 8, 8, 3);
        std::vector<SampleCoord> coords;
        for (int i = 0; i < 10; ++i) {
            coords.emplace_back(off_grid(rng, 0, 7, 0.01), off_grid(rng, 0, 7, 0.01));
        }
        std::vector<ChannelVector> up(coords.size(), ChannelVector(3));
        for (auto& u : up) {
            u = Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        }
        const auto analytic = grad_wrt_coords(g, coords, up);
        std::vector<double> flat;
        for (const auto& c : coords) {
            flat.insert(flat.end(), {c.x(), c.y()});
        }
        const auto numeric = central_gradient(
            [&](const std::vector<double>& x) {
                std::vector<SampleCoord> q;
                for (std::size_t i = 0; i < coords.size(); ++i) {
                    q.emplace_back(x[2 * i], x[2 * i + 1]);
                }
                const auto out = sample_bilinear(g, q);
                double s = 0.0;
                for (std::size_t i = 0; i < out.size(); ++i) {
                    s += up[i].dot(out[i]);
                }
                return s;
            },
            flat, 1e-4);
        std::vector<double> got;
        for (const auto& v : analytic) {
            got.insert(got.end(), {v.x(), v.y()});
        }
        CHECK(max_rel_error(got, numeric, 1e-6) < 1e-4);
    }
}

TEST_CASE("value gradient scatters the bilinear weights") {
    Rng rng(4);
    const Grid2D g = random_grid(rng, 5, 4, 2);
    const std::vector<SampleCoord> coords{{1.25, 2.5}, {3.0, 0.0}, {-4.0, 9.0}};
    std::vector<ChannelVector> up(coords.size(), ChannelVector(2));
    for (auto& u : up) {
        u = Eigen::Vector2d(uniform(rng, -1, 1), uniform(rng, -1, 1));
    }
    const Grid2D grad = grad_wrt_values(g, coords, up);
    // Sampling is linear in the values: <grad, V> = sum_i up_i . sample_i(V).
    const Grid2D v = random_grid(rng, 5, 4, 2);
    double lhs = 0.0;
    for (std::size_t i = 0; i < v.data().size(); ++i) {
        lhs += grad.data()[i] * v.data()[i];
    }
    const auto out = sample_bilinear(v, coords);
    double rhs = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        rhs += up[i].dot(out[i]);
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("samples are Lipschitz in the coordinates") {
    Rng rng(5);
    const Grid2D g = random_grid(rng, 10, 10, 1);
    double lipschitz = 0.0;
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 10; ++c) {
            if (c + 1 < 10) lipschitz = std::max(lipschitz, std::abs(g.at(r, c + 1) - g.at(r, c)));
            if (r + 1 < 10) lipschitz = std::max(lipschitz, std::abs(g.at(r + 1, c) - g.at(r, c)));
        }
    }
    for (int i = 0; i < 500; ++i) {
        const SampleCoord a(uniform(rng, -1, 10), uniform(rng, -1, 10));
        const Vec2 step(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05));
        const std::vector<SampleCoord> pair{a, a + step};
        const auto out = sample_bilinear(g, pair);
        // Bilinear interpolation is L-Lipschitz per axis, so L1 distance bounds the change.
        CHECK(std::abs(out[0][0] - out[1][0]) <= lipschitz * step.lpNorm<1>() + 1e-12);
    }
}

TEST_CASE("grid validation and containers") {
    CHECK_THROWS_AS(Grid2D(0, 3, 1), ArgumentError);
    CHECK_THROWS_AS(Grid2D(2, 2, 1, std::vector<double>(3)), ArgumentError);
    const std::vector<SampleCoord> nan{{std::nan(""), 0.0}};
    CHECK_THROWS_AS(sample_bilinear(Grid2D(2, 2, 1), nan), ArgumentError);

    Rng rng(6);
    const auto dir = std::filesystem::temp_directory_path() / "facewarp_sampler_test";
    std::filesystem::create_directories(dir);
    const Grid2D g = random_grid(rng, 7, 3, 5);
    save_raw(g, dir / "g.raw");
    const Grid2D back = load_raw(dir / "g.raw");
    CHECK(back.width() == 7);
    CHECK(back.channels() == 5);
    CHECK(back.data() == g.data());

    Grid2D img(4, 3, 1);
    for (std::size_t i = 0; i < img.data().size(); ++i) {
        img.data()[i] = static_cast<double>(i) / 11.0;
    }
    save_png(img, dir / "g.png");
    const Grid2D png = load_png(dir / "g.png");
    CHECK(png.width() == 4);
    CHECK(png.height() == 3);
    for (std::size_t i = 0; i < img.data().size(); ++i) {
        CHECK(std::abs(png.data()[i] - img.data()[i]) <= 0.5 / 255.0 + 1e-12);
    }
    CHECK_THROWS_AS(load_raw(dir / "g.png"), IoError);
    std::filesystem::remove_all(dir);
}
