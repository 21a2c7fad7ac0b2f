#include "facewarp/synth.hpp"

#include "facewarp/error.hpp"
#include "facewarp/parallel.hpp"
#include "raster.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

namespace facewarp {

namespace {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        j.at(key).get_to(out);
    }
}

double bbox_diagonal(std::span<const Point3> pts) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

// Dark spots around every landmark (rest shape) so that the image carries
// local evidence of where the landmarks are.
std::vector<double> vertex_albedo(const FaceMesh& mesh) {
    const Points3 lms = mesh.gather(mesh.vertices, mesh.landmark_vertices());
    constexpr double kSigma = 0.05;
    std::vector<double> albedo(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        double spot = 0.0;
        for (const auto& l : lms) {
            spot = std::max(spot, std::exp(-(mesh.vertices[i] - l).squaredNorm() / (2 * kSigma * kSigma)));
        }
        albedo[i] = 0.9 - 0.45 * spot;
    }
    return albedo;
}

}  // namespace

void SynthConfig::validate() const {
    if (image_size < 8 || supersample < 1) {
        throw ArgumentError("image_size must be >= 8 and supersample >= 1");
    }
    if (!(displacement_fraction >= 0.0 && displacement_fraction <= 0.1)) {
        throw ArgumentError("displacement_fraction must lie in [0, 0.1]");
    }
    if (!(scale > 0) || scale_jitter < 0 || scale_jitter >= 1 || center_jitter < 0 || max_pitch_deg < 0 ||
        max_roll_deg < 0 || perspective_jitter < 0 || perspective - perspective_jitter < 0) {
        throw ArgumentError("invalid camera distribution");
    }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"image_size", c.image_size},       {"supersample", c.supersample},
         {"max_pitch_deg", c.max_pitch_deg}, {"max_roll_deg", c.max_roll_deg},
         {"scale", c.scale},                 {"scale_jitter", c.scale_jitter},
         {"center_jitter", c.center_jitter}, {"perspective", c.perspective},
         {"perspective_jitter", c.perspective_jitter},
         {"displacement_fraction", c.displacement_fraction},
         {"background", c.background}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    read_field(j, "image_size", c.image_size);
    read_field(j, "supersample", c.supersample);
    read_field(j, "max_pitch_deg", c.max_pitch_deg);
    read_field(j, "max_roll_deg", c.max_roll_deg);
    read_field(j, "scale", c.scale);
    read_field(j, "scale_jitter", c.scale_jitter);
    read_field(j, "center_jitter", c.center_jitter);
    read_field(j, "perspective", c.perspective);
    read_field(j, "perspective_jitter", c.perspective_jitter);
    read_field(j, "displacement_fraction", c.displacement_fraction);
    read_field(j, "background", c.background);
}

int pose_bin(double yaw_deg) {
    const double a = std::abs(yaw_deg);
    if (a <= 30.0) {
        return 0;
    }
    return a <= 60.0 ? 1 : 2;
}

namespace {

Grid2D render_with_albedo(const FaceMesh& mesh, std::span<const Point3> warped, const CameraParams& cam,
                          const SynthConfig& config, const std::vector<double>& albedo) {
    const int ss = config.supersample;
    const int hi = config.image_size * ss;
    const Points2 screen = project(cam, warped);
    const std::vector<double> depth = projective_depth(cam, warped);
    std::vector<Vec2> q(screen.size());
    for (std::size_t i = 0; i < screen.size(); ++i) {
        q[i] = (screen[i] + Vec2::Constant(0.5)) * ss - Vec2::Constant(0.5);
    }
    const Point3 center = estimate_camera_center(cam);

    std::vector<double> inv_depth(static_cast<std::size_t>(hi * hi), -std::numeric_limits<double>::infinity());
    std::vector<double> color(static_cast<std::size_t>(hi * hi), config.background);
    for (const Face& f : mesh.faces) {
        const Point3& a = warped[static_cast<std::size_t>(f[0])];
        const Point3& b = warped[static_cast<std::size_t>(f[1])];
        const Point3& c = warped[static_cast<std::size_t>(f[2])];
        const Vec3 n = (b - a).cross(c - a);
        const Vec3 to_cam = center - (a + b + c) / 3.0;
        const double nn = n.norm() * to_cam.norm();
        if (!(nn > 0.0)) {
            continue;
        }
        const double shade = n.dot(to_cam) / nn;
        if (shade <= 0.0) {
            continue;
        }
        const double id0 = 1.0 / depth[static_cast<std::size_t>(f[0])];
        const double id1 = 1.0 / depth[static_cast<std::size_t>(f[1])];
        const double id2 = 1.0 / depth[static_cast<std::size_t>(f[2])];
        const double al0 = albedo[static_cast<std::size_t>(f[0])];
        const double al1 = albedo[static_cast<std::size_t>(f[1])];
        const double al2 = albedo[static_cast<std::size_t>(f[2])];
        detail::rasterize_triangle(q[static_cast<std::size_t>(f[0])], q[static_cast<std::size_t>(f[1])],
                                   q[static_cast<std::size_t>(f[2])], hi, hi,
                                   [&](int x, int y, double l0, double l1, double l2) {
                                       const auto k = static_cast<std::size_t>(y * hi + x);
                                       const double id = l0 * id0 + l1 * id1 + l2 * id2;
                                       if (id > inv_depth[k]) {
                                           inv_depth[k] = id;
                                           color[k] = (0.15 + 0.85 * shade) * (l0 * al0 + l1 * al1 + l2 * al2);
                                       }
                                   });
    }
    Grid2D image(config.image_size, config.image_size, 1);
    const double norm = 1.0 / (ss * ss);
    for (int y = 0; y < config.image_size; ++y) {
        for (int x = 0; x < config.image_size; ++x) {
            double sum = 0.0;
            for (int dy = 0; dy < ss; ++dy) {
                for (int dx = 0; dx < ss; ++dx) {
                    sum += color[static_cast<std::size_t>((y * ss + dy) * hi + x * ss + dx)];
                }
            }
            image.at(y, x) = sum * norm;
        }
    }
    return image;
}

}  // namespace

Grid2D render_face(const FaceMesh& mesh, std::span<const Point3> warped_vertices, const CameraParams& cam,
                   const SynthConfig& config) {
    if (warped_vertices.size() != mesh.vertices.size()) {
        throw ArgumentError("render needs one warped position per mesh vertex");
    }
    return render_with_albedo(mesh, warped_vertices, cam, config, vertex_albedo(mesh));
}

std::vector<TrainSample> synth_generate(const FaceMesh& mesh, const SynthConfig& config, std::size_t count,
                                        std::uint64_t seed) {
    config.validate();
    mesh.validate();
    const Points3 controls = mesh.control_points();
    const std::vector<int> lm_vertices = mesh.landmark_vertices();
    const std::vector<int> ids = mesh.landmark_ids();
    const double max_disp = config.displacement_fraction * bbox_diagonal(mesh.vertices);
    const double mid = 0.5 * (config.image_size - 1);
    const std::vector<double> albedo = vertex_albedo(mesh);

    std::vector<TrainSample> out(count);
    parallel_for(count, 4, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
            std::mt19937_64 rng(seq);
            auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

            const int bin = static_cast<int>(i % 3);
            ViewPose pose;
            const double abs_yaw = bin == 0 ? uni(0.0, 30.0) : uni(30.0 * bin, 30.0 * (bin + 1));
            pose.yaw_deg = uni(0.0, 1.0) < 0.5 ? -abs_yaw : abs_yaw;
            pose.pitch_deg = uni(-config.max_pitch_deg, config.max_pitch_deg);
            pose.roll_deg = uni(-config.max_roll_deg, config.max_roll_deg);
            pose.scale = config.scale * (1.0 + uni(-config.scale_jitter, config.scale_jitter));
            pose.center = Vec2(mid + uni(-config.center_jitter, config.center_jitter),
                               mid + uni(-config.center_jitter, config.center_jitter));
            pose.perspective = config.perspective + uni(-config.perspective_jitter, config.perspective_jitter);

            std::vector<ControlCorrespondence> pairs;
            pairs.reserve(controls.size());
            for (const auto& c : controls) {
                Vec3 d;
                do {
                    d = Vec3(uni(-1, 1), uni(-1, 1), uni(-1, 1));
                } while (d.squaredNorm() > 1.0);
                pairs.push_back({c, c + max_disp * d});
            }

            TrainSample& s = out[i];
            char id[32];
            std::snprintf(id, sizeof id, "s%06zu", i);
            s.id = id;
            s.yaw_deg = pose.yaw_deg;
            s.true_camera = view_camera(pose);
            s.true_warp = fit(pairs);
            s.true_vertices = apply_warp(s.true_warp, mesh.vertices);
            const Points2 lm = project(s.true_camera, mesh.gather(s.true_vertices, lm_vertices));
            const VisibilityMask vis = visibility(mesh, s.true_vertices, s.true_camera);
            s.true_lm2d.scheme = mesh.scheme;
            for (std::size_t l = 0; l < ids.size(); ++l) {
                s.true_lm2d.points.push_back({ids[l], lm[l], static_cast<bool>(vis[static_cast<std::size_t>(lm_vertices[l])])});
            }
            const Points2 all = project(s.true_camera, s.true_vertices);
            Vec2 lo = all.front();
            Vec2 hi = all.front();
            for (const auto& p : all) {
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
            s.bbox_w = hi.x() - lo.x();
            s.bbox_h = hi.y() - lo.y();
            s.image = render_with_albedo(mesh, s.true_vertices, s.true_camera, config, albedo);
        }
    });
    return out;
}

void save_dataset(const FaceMesh& mesh, std::span<const TrainSample> samples, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    save_mesh(mesh, {}, dir / "mesh.obj");
    std::ofstream out(dir / "samples.jsonl");
    if (!out) {
        throw IoError("cannot create " + (dir / "samples.jsonl").string());
    }
    for (const auto& s : samples) {
        const std::string image = "images/" + s.id + ".png";
        save_png(s.image, dir / image);
        nlohmann::json j = {{"id", s.id},
                            {"image", image},
                            {"camera", s.true_camera},
                            {"warp", s.true_warp},
                            {"landmarks", s.true_lm2d},
                            {"yaw_deg", s.yaw_deg},
                            {"bbox", {s.bbox_w, s.bbox_h}}};
        out << j.dump() << '\n';
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset data;
    data.mesh = load_mesh(dir / "mesh.obj");
    const auto index = dir / "samples.jsonl";
    std::ifstream in(index);
    if (!in) {
        throw IoError("cannot open " + index.string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        TrainSample s;
        try {
            const auto j = nlohmann::json::parse(line);
            s.id = j.at("id").get<std::string>();
            s.true_camera = j.at("camera").get<CameraParams>();
            s.true_warp = j.at("warp").get<TpsWarp3D>();
            s.true_lm2d = j.at("landmarks").get<LandmarkSet2D>();
            s.yaw_deg = j.at("yaw_deg").get<double>();
            const auto bbox = j.at("bbox").get<std::array<double, 2>>();
            s.bbox_w = bbox[0];
            s.bbox_h = bbox[1];
            s.image = load_png(dir / j.at("image").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(index.string(), line_no, e.what());
        }
        s.true_vertices = apply_warp(s.true_warp, data.mesh.vertices);
        data.samples.push_back(std::move(s));
    }
    return data;
}

}  // namespace facewarp
