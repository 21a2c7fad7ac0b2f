#include "facewarp/audit.hpp"

#include "facewarp/error.hpp"
#include "facewarp/estimator.hpp"
#include "facewarp/projection.hpp"
#include "facewarp/sampler.hpp"
#include "facewarp/synth.hpp"
#include "facewarp/tps.hpp"
#include "estimator_detail.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

namespace facewarp {

namespace {

using Rng = std::mt19937_64;

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Rng seeded(std::uint64_t seed, int k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    return Rng(seq);
}

// Accumulates the worst relative error of one block of comparisons.
struct Block {
    std::vector<double> analytic;
    std::vector<double> numeric;
    std::vector<double> floors;
    /// Lower bound for the error scale; raised to the largest analytic entry.
    double scale = 0.0;

    void add(double a, double f, double floor = 0.0) {
        analytic.push_back(a);
        numeric.push_back(f);
        floors.push_back(floor);
    }
    void merge_into(AuditResult& r) const {
        double scale = this->scale;
        for (double a : analytic) {
            scale = std::max(scale, std::abs(a));
        }
        const double floor = std::max(1e-6 * scale, 1e-300);
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor, floors[i]});
            r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[i] - numeric[i]) / denom);
        }
        r.checks += analytic.size();
    }
};

double central(const std::function<double(double)>& f, double x0, double h) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

CameraParams random_camera(Rng& rng) {
    std::array<double, CameraParams::kSize> a{};
    for (int i = 0; i < 8; ++i) {
        a[static_cast<std::size_t>(i)] = uni(rng, -2.0, 2.0);
    }
    for (int i = 8; i < 11; ++i) {
        a[static_cast<std::size_t>(i)] = uni(rng, -0.12, 0.12);
    }
    return CameraParams(a);
}

Points3 random_points(Rng& rng, std::size_t n) {
    Points3 p(n);
    for (auto& v : p) {
        v = Vec3(uni(rng, -1, 1), uni(rng, -1, 1), uni(rng, -1, 1));
    }
    return p;
}

template <class F>
AuditResult timed(const std::string& name, int seeds, double tol, F&& body) {
    if (seeds < 1) {
        throw ArgumentError("audits need at least one seed");
    }
    AuditResult r;
    r.name = name;
    r.seeds = seeds;
    r.tolerance = tol;
    const auto t0 = std::chrono::steady_clock::now();
    body(r);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

double dot_outputs(const Points2& o, const std::vector<Vec2>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        s += o[i].dot(g[i]);
    }
    return s;
}

}  // namespace

AuditResult audit_projection_camera(std::uint64_t seed, int seeds) {
    return timed("proj.camera", seeds, kAuditTolerance, [&](AuditResult& r) {
        for (int k = 0; k < seeds; ++k) {
            Rng rng = seeded(seed, k);
            const CameraParams cam = random_camera(rng);
            const Points3 pts = random_points(rng, 12);
            std::vector<Vec2> g(pts.size());
            for (auto& v : g) {
                v = Vec2(uni(rng, -1, 1), uni(rng, -1, 1));
            }
            const CameraGrad a = grad_wrt_camera(cam, pts, g);
            Block b;
            for (int i = 0; i < CameraParams::kSize; ++i) {
                b.add(a[i], central([&](double v) {
                          CameraParams c = cam;
                          c[i] = v;
                          return dot_outputs(project(c, pts), g);
                      }, cam[i], kAuditStep));
            }
            b.merge_into(r);
        }
    });
}

AuditResult audit_projection_points(std::uint64_t seed, int seeds) {
    return timed("proj.points", seeds, kAuditTolerance, [&](AuditResult& r) {
        for (int k = 0; k < seeds; ++k) {
            Rng rng = seeded(seed, k);
            const CameraParams cam = random_camera(rng);
            const Points3 pts = random_points(rng, 12);
            std::vector<Vec2> g(pts.size());
            for (auto& v : g) {
                v = Vec2(uni(rng, -1, 1), uni(rng, -1, 1));
            }
            const Points3 a = grad_wrt_points(cam, pts, g);
            Block b;
            for (std::size_t p = 0; p < pts.size(); ++p) {
                for (int d = 0; d < 3; ++d) {
                    b.add(a[p][d], central([&](double v) {
                              Points3 q = pts;
                              q[p][d] = v;
                              return dot_outputs(project(cam, q), g);
                          }, pts[p][d], kAuditStep));
                }
            }
            b.merge_into(r);
        }
    });
}

AuditResult audit_tps(std::uint64_t seed, int seeds) {
    return timed("tps.params", seeds, kAuditTolerance, [&](AuditResult& r) {
        for (int k = 0; k < seeds; ++k) {
            Rng rng = seeded(seed, k);
            const std::size_t n = std::array<std::size_t, 3>{4, 8, 40}[static_cast<std::size_t>(k % 3)];
            TpsWarp3D warp = TpsWarp3D::identity(random_points(rng, n));
            for (int d = 0; d < 3; ++d) {
                for (Eigen::Index i = 0; i < warp.theta(d).size(); ++i) {
                    warp.theta(d)[i] = uni(rng, -0.2, 0.2);
                }
            }
            const Points3 pts = random_points(rng, 30);
            std::vector<Vec3> g(pts.size());
            for (auto& v : g) {
                v = Vec3(uni(rng, -1, 1), uni(rng, -1, 1), uni(rng, -1, 1));
            }
            const TpsParamGrad a = grad_wrt_params(warp, pts, g);
            auto loss = [&](const TpsWarp3D& w) {
                const Points3 o = apply_warp(w, pts);
                double s = 0.0;
                for (std::size_t i = 0; i < o.size(); ++i) {
                    s += o[i].dot(g[i]);
                }
                return s;
            };
            Block b;
            for (int d = 0; d < 3; ++d) {
                const TpsParams& ad = d == 0 ? a.dx : (d == 1 ? a.dy : a.dz);
                for (Eigen::Index i = 0; i < ad.size(); ++i) {
                    b.add(ad[i], central([&](double v) {
                              TpsWarp3D w = warp;
                              w.theta(d)[i] = v;
                              return loss(w);
                          }, warp.theta(d)[i], kAuditStep));
                }
            }
            b.merge_into(r);
        }
    });
}

AuditResult audit_sampler(std::uint64_t seed, int seeds) {
    return timed("sampler", seeds, kAuditTolerance, [&](AuditResult& r) {
        for (int k = 0; k < seeds; ++k) {
            Rng rng = seeded(seed, k);
            Grid2D grid(7, 5, 3);
            for (auto& v : grid.data()) {
                v = uni(rng, -1, 1);
            }
            std::vector<SampleCoord> coords;
            while (coords.size() < 10) {
                const SampleCoord c(uni(rng, 0.0, 6.0), uni(rng, 0.0, 4.0));
                // The coordinate derivative jumps on gridlines.
                const double gap = std::min(std::abs(c.x() - std::round(c.x())), std::abs(c.y() - std::round(c.y())));
                if (gap > 10 * kAuditStep) {
                    coords.push_back(c);
                }
            }
            std::vector<ChannelVector> g(coords.size(), ChannelVector(3));
            for (auto& v : g) {
                v = ChannelVector::NullaryExpr(3, [&] { return uni(rng, -1, 1); });
            }
            auto loss = [&](const Grid2D& gr, const std::vector<SampleCoord>& cs) {
                const auto o = sample_bilinear(gr, cs);
                double s = 0.0;
                for (std::size_t i = 0; i < o.size(); ++i) {
                    s += o[i].dot(g[i]);
                }
                return s;
            };
            const auto ac = grad_wrt_coords(grid, coords, g);
            Block bc;
            for (std::size_t i = 0; i < coords.size(); ++i) {
                for (int d = 0; d < 2; ++d) {
                    bc.add(ac[i][d], central([&](double v) {
                               auto cs = coords;
                               cs[i][d] = v;
                               return loss(grid, cs);
                           }, coords[i][d], kAuditStep));
                }
            }
            bc.merge_into(r);
            const Grid2D av = grad_wrt_values(grid, coords, g);
            Block bv;
            for (std::size_t i = 0; i < grid.data().size(); ++i) {
                bv.add(av.data()[i], central([&](double v) {
                           Grid2D gr = grid;
                           gr.data()[i] = v;
                           return loss(gr, coords);
                       }, grid.data()[i], kAuditStep));
            }
            bv.merge_into(r);
        }
    });
}

AuditResult audit_e2e(std::uint64_t seed, int seeds) {
    constexpr bool single = sizeof(Real) == sizeof(float);
    const double tol = single ? 1e-4 : 1e-6;
    // 32-bit activations put rounding noise of ~1e-7 |L| / h on a difference,
    // so single precision needs a much larger step; kink crossings are skipped.
    const double step = single ? 1e-1 : kAuditStep;
    return timed("e2e", seeds, tol, [&](AuditResult& r) {
        static const FaceMesh mesh = make_synthetic_face();
        for (int k = 0; k < seeds; ++k) {
            Rng rng = seeded(seed, k);
            const auto samples = synth_generate(mesh, SynthConfig{}, 3, seed + static_cast<std::uint64_t>(k));
            const TrainSample& sample = samples[static_cast<std::size_t>(k % 3)];
            EstimatorConfig config;
            config.seed = seed * 1000 + static_cast<std::uint64_t>(k);
            Model model(config, mesh);
            auto jitter = [&](const std::string& name, double sd) {
                std::normal_distribution<double> normal(0.0, sd);
                RealMatrix& m = model.parameter(name).value;
                for (Eigen::Index i = 0; i < m.size(); ++i) {
                    m.data()[i] = static_cast<Real>(normal(rng));
                }
            };
            jitter("camera.weight", 0.002);
            jitter("tps.weight", 0.01);
            jitter("offset.weight", 0.05);
            jitter("offset.bias", 1.0);
            const LossWeights weights{100.0, 1.0, 1.0, false};
            Gradients grads = zero_gradients(model);
            sample_loss(model, sample, weights, &grads);
            const std::vector<char> base_sig = detail::kink_signature(model, sample.image);

            auto& params = model.parameters();
            for (ParamGroup group : {ParamGroup::Backbone, ParamGroup::CameraHead, ParamGroup::TpsHead,
                                     ParamGroup::FeatureBranch, ParamGroup::OffsetHeads}) {
                std::vector<std::pair<std::size_t, Eigen::Index>> entries;
                for (std::size_t p = 0; p < params.size(); ++p) {
                    if (params[p].group == group) {
                        for (Eigen::Index i = 0; i < params[p].value.size(); ++i) {
                            entries.emplace_back(p, i);
                        }
                    }
                }
                // Score the block against the largest gradient of the group.
                Block b;
                for (const auto& [p, i] : entries) {
                    b.scale = std::max(b.scale, std::abs(static_cast<double>(grads[p].data()[i])));
                }
                for (int pick = 0; pick < 8; ++pick) {
                    const auto [p, i] =
                        entries[std::uniform_int_distribution<std::size_t>(0, entries.size() - 1)(rng)];
                    Real& slot = params[p].value.data()[i];
                    const Real orig = slot;
                    auto eval = [&](double v) {
                        slot = static_cast<Real>(v);
                        const bool same = detail::kink_signature(model, sample.image) == base_sig;
                        const double l = sample_loss(model, sample, weights).total;
                        return std::pair{l, same};
                    };
                    const auto [lp, sp] = eval(orig + step);
                    const auto [lm, sm] = eval(orig - step);
                    slot = orig;
                    if (!sp || !sm) {
                        ++r.skipped;
                        continue;
                    }
                    // Central differences of L carry roughly eps |L| / h of rounding
                    // noise, so derivatives below 1e-3 |L| are judged absolutely.
                    b.add(static_cast<double>(grads[p].data()[i]), (lp - lm) / (2.0 * step),
                          1e-3 * std::max(std::abs(lp), std::abs(lm)));
                }
                b.merge_into(r);
            }
        }
    });
}

std::vector<AuditResult> run_audits(const std::string& module, std::uint64_t seed, int seeds) {
    std::vector<AuditResult> out;
    const bool all = module == "all";
    if (!all && module != "proj" && module != "tps" && module != "sampler" && module != "e2e") {
        throw ArgumentError("unknown gradcheck module '" + module + "' (expected all, proj, tps, sampler or e2e)");
    }
    if (all || module == "proj") {
        out.push_back(audit_projection_camera(seed, seeds));
        out.push_back(audit_projection_points(seed, seeds));
    }
    if (all || module == "tps") {
        out.push_back(audit_tps(seed, seeds));
    }
    if (all || module == "sampler") {
        out.push_back(audit_sampler(seed, seeds));
    }
    if (all || module == "e2e") {
        out.push_back(audit_e2e(seed, seeds));
    }
    return out;
}

}  // namespace facewarp
