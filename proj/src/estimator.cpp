#include "facewarp/estimator.hpp"

#include "facewarp/error.hpp"
#include "estimator_detail.hpp"
#include "nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace facewarp {

namespace {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        j.at(key).get_to(out);
    }
}

}  // namespace

void EstimatorConfig::validate() const {
    if (input_size < 8 || input_size % 8 != 0) {
        throw ArgumentError("input_size must be a positive multiple of 8");
    }
    for (int c : conv_channels) {
        if (c < 1) {
            throw ArgumentError("conv channel counts must be positive");
        }
    }
    if (fc_width < 1 || branch_channels < 1 || feature_dim < 1) {
        throw ArgumentError("layer widths must be positive");
    }
    if (feature_block < 1 || feature_block > 4) {
        throw ArgumentError("feature_block must be in 1..4");
    }
    if (weights.w_3d < 0 || weights.w_proj < 0 || weights.w_reg < 0 || weights.w_tex < 0) {
        throw ArgumentError("loss weights must be non-negative");
    }
    if (weights.w_3d + weights.w_proj + weights.w_reg + (weights.texture_gradient ? weights.w_tex : 0.0) <= 0) {
        throw ArgumentError("at least one loss weight must be positive");
    }
    if (batch_size < 1 || phase1_epochs < 0 || phase2_epochs < 0 || lr_step < 1) {
        throw ArgumentError("batch_size and lr_step must be >= 1, epoch counts >= 0");
    }
    if (lr_phase1 < 0 || lr_phase2 < 0 || lr_decay <= 0 || momentum < 0 || momentum >= 1) {
        throw ArgumentError("learning rates must be >= 0, lr_decay > 0 and momentum in [0, 1)");
    }
    if (!(camera_scale_linear > 0) || !(camera_scale_perspective > 0) || !(tps_scale > 0)) {
        throw ArgumentError("head output scales must be positive");
    }
}

void to_json(nlohmann::json& j, const EstimatorConfig& c) {
    j = {{"input_size", c.input_size},
         {"conv_channels", c.conv_channels},
         {"fc_width", c.fc_width},
         {"feature_block", c.feature_block},
         {"branch_channels", c.branch_channels},
         {"feature_dim", c.feature_dim},
         {"initial_pose",
          {{"yaw_deg", c.initial_pose.yaw_deg},
           {"pitch_deg", c.initial_pose.pitch_deg},
           {"roll_deg", c.initial_pose.roll_deg},
           {"scale", c.initial_pose.scale},
           {"center", {c.initial_pose.center.x(), c.initial_pose.center.y()}},
           {"perspective", c.initial_pose.perspective}}},
         {"camera_scale_linear", c.camera_scale_linear},
         {"camera_scale_perspective", c.camera_scale_perspective},
         {"tps_scale", c.tps_scale},
         {"w_3d", c.weights.w_3d},
         {"w_proj", c.weights.w_proj},
         {"w_reg", c.weights.w_reg},
         {"visibility_gated", c.weights.visibility_gated},
         {"texture_gradient", c.weights.texture_gradient},
         {"w_tex", c.weights.w_tex},
         {"batch_size", c.batch_size},
         {"phase1_epochs", c.phase1_epochs},
         {"phase2_epochs", c.phase2_epochs},
         {"lr_phase1", c.lr_phase1},
         {"lr_phase2", c.lr_phase2},
         {"lr_decay", c.lr_decay},
         {"lr_step", c.lr_step},
         {"momentum", c.momentum},
         {"clip_norm", c.clip_norm},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EstimatorConfig& c) {
    read_field(j, "input_size", c.input_size);
    read_field(j, "conv_channels", c.conv_channels);
    read_field(j, "fc_width", c.fc_width);
    read_field(j, "feature_block", c.feature_block);
    read_field(j, "branch_channels", c.branch_channels);
    read_field(j, "feature_dim", c.feature_dim);
    if (j.contains("initial_pose")) {
        const auto& p = j.at("initial_pose");
        read_field(p, "yaw_deg", c.initial_pose.yaw_deg);
        read_field(p, "pitch_deg", c.initial_pose.pitch_deg);
        read_field(p, "roll_deg", c.initial_pose.roll_deg);
        read_field(p, "scale", c.initial_pose.scale);
        read_field(p, "perspective", c.initial_pose.perspective);
        if (p.contains("center")) {
            const auto center = p.at("center").get<std::array<double, 2>>();
            c.initial_pose.center = Vec2(center[0], center[1]);
        }
    }
    read_field(j, "camera_scale_linear", c.camera_scale_linear);
    read_field(j, "camera_scale_perspective", c.camera_scale_perspective);
    read_field(j, "tps_scale", c.tps_scale);
    read_field(j, "w_3d", c.weights.w_3d);
    read_field(j, "w_proj", c.weights.w_proj);
    read_field(j, "w_reg", c.weights.w_reg);
    read_field(j, "visibility_gated", c.weights.visibility_gated);
    read_field(j, "texture_gradient", c.weights.texture_gradient);
    read_field(j, "w_tex", c.weights.w_tex);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "phase1_epochs", c.phase1_epochs);
    read_field(j, "phase2_epochs", c.phase2_epochs);
    read_field(j, "lr_phase1", c.lr_phase1);
    read_field(j, "lr_phase2", c.lr_phase2);
    read_field(j, "lr_decay", c.lr_decay);
    read_field(j, "lr_step", c.lr_step);
    read_field(j, "momentum", c.momentum);
    read_field(j, "clip_norm", c.clip_norm);
    read_field(j, "seed", c.seed);
}

std::string to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::Backbone: return "backbone";
        case ParamGroup::CameraHead: return "camera_head";
        case ParamGroup::TpsHead: return "tps_head";
        case ParamGroup::FeatureBranch: return "feature_branch";
        case ParamGroup::OffsetHeads: return "offset_heads";
    }
    return "unknown";
}

namespace {

// Parameter slots, in storage order.
enum Slot : int {
    kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B, kConv4W, kConv4B,
    kFcW, kFcB, kCamW, kCamB, kTpsW, kTpsB, kBranch1W, kBranch1B, kBranch2W, kBranch2B,
    kOffsetW, kOffsetB, kSlotCount
};

nn::ConvShape conv_shape(const EstimatorConfig& c, int block) {
    const int cin = block == 0 ? 1 : c.conv_channels[static_cast<std::size_t>(block - 1)];
    return {cin, c.conv_channels[static_cast<std::size_t>(block)], 3, block < 3 ? 2 : 1, 1};
}

nn::ConvShape branch1_shape(const EstimatorConfig& c) {
    return {c.conv_channels[static_cast<std::size_t>(c.feature_block - 1)], c.branch_channels, 3, 1, 1};
}

int block_size(const EstimatorConfig& c, int block) {
    int n = c.input_size;
    for (int b = 0; b < block; ++b) {
        n = conv_shape(c, b).out_size(n);
    }
    return n;
}

int feature_stride(const EstimatorConfig& c) { return c.input_size / block_size(c, c.feature_block); }

std::array<double, CameraParams::kSize> camera_scales(const EstimatorConfig& c) {
    std::array<double, CameraParams::kSize> s{};
    for (int i = 0; i < CameraParams::kSize; ++i) {
        s[static_cast<std::size_t>(i)] = i < 8 ? c.camera_scale_linear : c.camera_scale_perspective;
    }
    return s;
}

}  // namespace

Model::Model(EstimatorConfig config, FaceMesh mesh) : config_(std::move(config)), mesh_(std::move(mesh)) {
    config_.validate();
    mesh_.validate();
    if (mesh_.control_indices.size() < 4) {
        throw ArgumentError("the mesh needs at least 4 control vertices");
    }
    landmark_vertices_ = mesh_.landmark_vertices();
    if (landmark_vertices_.empty()) {
        throw ArgumentError("the mesh has no landmark map");
    }
    basis_ = TpsBasis(mesh_.vertices, mesh_.control_points());
    initial_camera_ = view_camera(config_.initial_pose);

    const auto& c = config_;
    const int flat = c.conv_channels[3] * block_size(c, 4) * block_size(c, 4);
    const int tps_out = 3 * static_cast<int>(mesh_.control_indices.size() + 4);
    const int landmarks = landmark_count();

    auto add = [&](const std::string& name, ParamGroup group, int rows, int cols) {
        params_.push_back({name, group, RealMatrix::Zero(rows, cols)});
    };
    for (int b = 0; b < 4; ++b) {
        const auto s = conv_shape(c, b);
        add("conv" + std::to_string(b + 1) + ".weight", ParamGroup::Backbone, s.cout, s.cin * 9);
        add("conv" + std::to_string(b + 1) + ".bias", ParamGroup::Backbone, s.cout, 1);
    }
    add("fc.weight", ParamGroup::Backbone, c.fc_width, flat);
    add("fc.bias", ParamGroup::Backbone, c.fc_width, 1);
    add("camera.weight", ParamGroup::CameraHead, CameraParams::kSize, c.fc_width);
    add("camera.bias", ParamGroup::CameraHead, CameraParams::kSize, 1);
    add("tps.weight", ParamGroup::TpsHead, tps_out, c.fc_width);
    add("tps.bias", ParamGroup::TpsHead, tps_out, 1);
    const auto b1 = branch1_shape(c);
    add("branch1.weight", ParamGroup::FeatureBranch, b1.cout, b1.cin * 9);
    add("branch1.bias", ParamGroup::FeatureBranch, b1.cout, 1);
    add("branch2.weight", ParamGroup::FeatureBranch, c.feature_dim, c.branch_channels);
    add("branch2.bias", ParamGroup::FeatureBranch, c.feature_dim, 1);
    // Rows 2l and 2l+1 belong to landmark l only.
    add("offset.weight", ParamGroup::OffsetHeads, 2 * landmarks, c.feature_dim);
    add("offset.bias", ParamGroup::OffsetHeads, 2 * landmarks, 1);

    std::mt19937_64 rng(c.seed);
    for (int slot : {kConv1W, kConv2W, kConv3W, kConv4W, kFcW, kBranch1W, kBranch2W}) {
        RealMatrix& w = params_[static_cast<std::size_t>(slot)].value;
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
        for (Eigen::Index col = 0; col < w.cols(); ++col) {
            for (Eigen::Index row = 0; row < w.rows(); ++row) {
                w(row, col) = static_cast<Real>(normal(rng));
            }
        }
    }
}

Parameter& Model::parameter(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) {
            return p;
        }
    }
    throw ArgumentError("unknown parameter '" + name + "'");
}

const Parameter& Model::parameter(const std::string& name) const {
    return const_cast<Model*>(this)->parameter(name);
}

std::size_t Model::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += static_cast<std::size_t>(p.value.size());
    }
    return n;
}

Gradients zero_gradients(const Model& model) {
    Gradients g;
    g.reserve(model.parameters().size());
    for (const auto& p : model.parameters()) {
        g.push_back(RealMatrix::Zero(p.value.rows(), p.value.cols()));
    }
    return g;
}

namespace {

struct Trace {
    std::array<nn::Mat, 4> cols;
    std::array<nn::Mat, 4> acts;
    std::array<int, 5> sizes{};
    nn::Mat hidden;
    CameraParams camera;
    TpsWarp3D warp;
    Points3 vertices;
    Points3 lm3;
    Points2 lm_init;
    nn::Mat branch_col;
    nn::Mat branch_act;
    nn::Mat features;
    Grid2D feature_grid;
    std::vector<SampleCoord> feature_coords;
    std::vector<ChannelVector> sampled;
    Points2 lm_refined;
};

const nn::Mat& value(const Model& m, int slot) { return m.parameters()[static_cast<std::size_t>(slot)].value; }

void forward(const Model& model, const Grid2D& image, Trace& t) {
    const auto& c = model.config();
    if (image.width() != c.input_size || image.height() != c.input_size || image.channels() != 1) {
        throw ArgumentError("estimator expects a " + std::to_string(c.input_size) + "x" +
                            std::to_string(c.input_size) + " single-channel image, got " +
                            std::to_string(image.width()) + "x" + std::to_string(image.height()) + "x" +
                            std::to_string(image.channels()));
    }
    nn::Mat x(1, c.input_size * c.input_size);
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        x(0, i) = static_cast<Real>(image.data()[static_cast<std::size_t>(i)]);
    }
    t.sizes[0] = c.input_size;
    const nn::Mat* in = &x;
    for (int b = 0; b < 4; ++b) {
        const auto s = conv_shape(c, b);
        nn::im2col(*in, t.sizes[b], t.sizes[b], s, t.cols[b]);
        nn::conv_forward(value(model, kConv1W + 2 * b), value(model, kConv1B + 2 * b), t.cols[b], t.acts[b]);
        nn::relu_inplace(t.acts[b]);
        t.sizes[b + 1] = s.out_size(t.sizes[b]);
        in = &t.acts[b];
    }
    const Eigen::Map<const nn::Vec> flat(t.acts[3].data(), t.acts[3].size());
    t.hidden = value(model, kFcW) * flat + value(model, kFcB);
    nn::relu_inplace(t.hidden);

    const nn::Mat zc = value(model, kCamW) * t.hidden + value(model, kCamB);
    const auto scales = camera_scales(c);
    t.camera = model.initial_camera();
    for (int i = 0; i < CameraParams::kSize; ++i) {
        t.camera[i] += scales[static_cast<std::size_t>(i)] * static_cast<double>(zc(i, 0));
    }
    const nn::Mat zt = value(model, kTpsW) * t.hidden + value(model, kTpsB);
    const auto p = static_cast<Eigen::Index>(model.mesh().control_indices.size() + 4);
    t.warp = TpsWarp3D::identity(model.mesh().control_points());
    for (int d = 0; d < 3; ++d) {
        for (Eigen::Index k = 0; k < p; ++k) {
            t.warp.theta(d)[k] = c.tps_scale * static_cast<double>(zt(d * p + k, 0));
        }
    }
    t.vertices = model.vertex_basis().apply(t.warp);
    t.lm3 = model.mesh().gather(t.vertices, model.landmark_vertices());
    t.lm_init = project(t.camera, t.lm3);

    // Landmark feature branch on the chosen conv block.
    const int fb = c.feature_block;
    const int fs = t.sizes[static_cast<std::size_t>(fb)];
    nn::im2col(t.acts[static_cast<std::size_t>(fb - 1)], fs, fs, branch1_shape(c), t.branch_col);
    nn::conv_forward(value(model, kBranch1W), value(model, kBranch1B), t.branch_col, t.branch_act);
    nn::relu_inplace(t.branch_act);
    nn::conv_forward(value(model, kBranch2W), value(model, kBranch2B), t.branch_act, t.features);
    nn::relu_inplace(t.features);

    std::vector<double> buf(static_cast<std::size_t>(t.features.size()));
    for (Eigen::Index i = 0; i < t.features.size(); ++i) {
        buf[static_cast<std::size_t>(i)] = static_cast<double>(t.features.data()[i]);
    }
    t.feature_grid = Grid2D(fs, fs, c.feature_dim, std::move(buf));
    const double inv_stride = 1.0 / feature_stride(c);
    t.feature_coords.resize(t.lm_init.size());
    for (std::size_t l = 0; l < t.lm_init.size(); ++l) {
        t.feature_coords[l] = t.lm_init[l] * inv_stride;
    }
    t.sampled = sample_bilinear(t.feature_grid, t.feature_coords);

    const nn::Mat& ow = value(model, kOffsetW);
    const nn::Mat& ob = value(model, kOffsetB);
    t.lm_refined.resize(t.lm_init.size());
    for (std::size_t l = 0; l < t.lm_init.size(); ++l) {
        const auto r = static_cast<Eigen::Index>(2 * l);
        const nn::Vec f = t.sampled[l].cast<Real>();
        const Real dx = ow.row(r).dot(f) + ob(r, 0);
        const Real dy = ow.row(r + 1).dot(f) + ob(r + 1, 0);
        t.lm_refined[l] = t.lm_init[l] + Vec2(static_cast<double>(dx), static_cast<double>(dy));
    }
}

// Which parameter groups receive gradients.
struct GradScope {
    bool upstream = true;
    bool branch = true;
};

// d_vertex_proj: optional gradient w.r.t. the projections of every vertex.
void backward(const Model& model, const Trace& t, std::span<const Vec3> d_vertices_in,
              std::span<const Vec2> d_init_in, std::span<const Vec2> d_refined,
              std::span<const Vec2> d_vertex_proj, const GradScope& scope, Gradients& g) {
    const auto& c = model.config();
    const std::size_t n_lm = t.lm_init.size();
    auto grad = [&](int slot) -> nn::Mat& { return g[static_cast<std::size_t>(slot)]; };

    std::vector<Vec2> d_init(d_init_in.begin(), d_init_in.end());
    const int fb = c.feature_block;
    const int fs = t.sizes[static_cast<std::size_t>(fb)];
    nn::Mat d_block_from_branch;

    bool any_refined = false;
    for (const auto& v : d_refined) {
        any_refined = any_refined || v.x() != 0.0 || v.y() != 0.0;
    }
    if (any_refined && (scope.branch || scope.upstream)) {
        // lm_refined = lm_init + W_l f_l + b_l
        const nn::Mat& ow = value(model, kOffsetW);
        std::vector<ChannelVector> d_sampled(n_lm);
        for (std::size_t l = 0; l < n_lm; ++l) {
            const auto r = static_cast<Eigen::Index>(2 * l);
            const Real gx = static_cast<Real>(d_refined[l].x());
            const Real gy = static_cast<Real>(d_refined[l].y());
            if (scope.branch) {
                const nn::Vec f = t.sampled[l].cast<Real>();
                grad(kOffsetW).row(r) += gx * f.transpose();
                grad(kOffsetW).row(r + 1) += gy * f.transpose();
                grad(kOffsetB)(r, 0) += gx;
                grad(kOffsetB)(r + 1, 0) += gy;
            }
            d_sampled[l] = (gx * ow.row(r) + gy * ow.row(r + 1)).transpose().template cast<double>();
            d_init[l] += d_refined[l];
        }
        if (scope.upstream) {
            const double inv_stride = 1.0 / feature_stride(c);
            const auto d_coords = grad_wrt_coords(t.feature_grid, t.feature_coords, d_sampled);
            for (std::size_t l = 0; l < n_lm; ++l) {
                d_init[l] += d_coords[l] * inv_stride;
            }
        }
        const Grid2D d_grid = grad_wrt_values(t.feature_grid, t.feature_coords, d_sampled);
        nn::Mat d_feat(t.features.rows(), t.features.cols());
        for (Eigen::Index i = 0; i < d_feat.size(); ++i) {
            d_feat.data()[i] = static_cast<Real>(d_grid.data()[static_cast<std::size_t>(i)]);
        }
        nn::relu_backward(t.features, d_feat);
        nn::Mat d_branch_act = value(model, kBranch2W).transpose() * d_feat;
        if (scope.branch) {
            grad(kBranch2W).noalias() += d_feat * t.branch_act.transpose();
            grad(kBranch2B).col(0) += d_feat.rowwise().sum();
        }
        nn::relu_backward(t.branch_act, d_branch_act);
        nn::Mat dummy_w = nn::Mat::Zero(grad(kBranch1W).rows(), grad(kBranch1W).cols());
        nn::Mat dummy_b = nn::Mat::Zero(grad(kBranch1B).rows(), 1);
        if (scope.upstream) {
            d_block_from_branch = nn::Mat::Zero(t.acts[static_cast<std::size_t>(fb - 1)].rows(), fs * fs);
        }
        nn::conv_backward(value(model, kBranch1W), t.branch_col, d_branch_act, fs, fs, branch1_shape(c),
                          scope.branch ? grad(kBranch1W) : dummy_w, scope.branch ? grad(kBranch1B) : dummy_b,
                          scope.upstream ? &d_block_from_branch : nullptr);
    }
    if (!scope.upstream) {
        return;
    }

    // Camera head.
    CameraGrad d_cam = grad_wrt_camera(t.camera, t.lm3, d_init);
    if (!d_vertex_proj.empty()) {
        d_cam += grad_wrt_camera(t.camera, t.vertices, d_vertex_proj);
    }
    const auto scales = camera_scales(c);
    nn::Mat d_zc(CameraParams::kSize, 1);
    for (int i = 0; i < CameraParams::kSize; ++i) {
        d_zc(i, 0) = static_cast<Real>(d_cam[i] * scales[static_cast<std::size_t>(i)]);
    }
    // Points: landmark gradients scatter onto their vertices.
    std::vector<Vec3> d_vertices(d_vertices_in.begin(), d_vertices_in.end());
    d_vertices.resize(t.vertices.size(), Vec3::Zero());
    const Points3 d_lm3 = grad_wrt_points(t.camera, t.lm3, d_init);
    for (std::size_t l = 0; l < n_lm; ++l) {
        d_vertices[static_cast<std::size_t>(model.landmark_vertices()[l])] += d_lm3[l];
    }
    if (!d_vertex_proj.empty()) {
        const Points3 d_all = grad_wrt_points(t.camera, t.vertices, d_vertex_proj);
        for (std::size_t i = 0; i < d_all.size(); ++i) {
            d_vertices[i] += d_all[i];
        }
    }
    const TpsParamGrad d_theta = model.vertex_basis().grad_wrt_params(d_vertices);
    const auto p = static_cast<Eigen::Index>(model.mesh().control_indices.size() + 4);
    nn::Mat d_zt(3 * p, 1);
    for (Eigen::Index k = 0; k < p; ++k) {
        d_zt(k, 0) = static_cast<Real>(c.tps_scale * d_theta.dx[k]);
        d_zt(p + k, 0) = static_cast<Real>(c.tps_scale * d_theta.dy[k]);
        d_zt(2 * p + k, 0) = static_cast<Real>(c.tps_scale * d_theta.dz[k]);
    }
    grad(kCamW).noalias() += d_zc * t.hidden.transpose();
    grad(kCamB) += d_zc;
    grad(kTpsW).noalias() += d_zt * t.hidden.transpose();
    grad(kTpsB) += d_zt;

    nn::Mat d_hidden = value(model, kCamW).transpose() * d_zc + value(model, kTpsW).transpose() * d_zt;
    nn::relu_backward(t.hidden, d_hidden);
    const Eigen::Map<const nn::Vec> flat(t.acts[3].data(), t.acts[3].size());
    grad(kFcW).noalias() += d_hidden * flat.transpose();
    grad(kFcB) += d_hidden;
    nn::Mat d_flat = value(model, kFcW).transpose() * d_hidden;
    nn::Mat d_act = Eigen::Map<nn::Mat>(d_flat.data(), t.acts[3].rows(), t.acts[3].cols());

    for (int b = 3; b >= 0; --b) {
        if (b + 1 == fb && d_block_from_branch.size() > 0) {
            d_act += d_block_from_branch;
        }
        nn::relu_backward(t.acts[static_cast<std::size_t>(b)], d_act);
        const auto s = conv_shape(c, b);
        nn::Mat d_in;
        if (b > 0) {
            d_in = nn::Mat::Zero(s.cin, t.sizes[static_cast<std::size_t>(b)] * t.sizes[static_cast<std::size_t>(b)]);
        }
        nn::conv_backward(value(model, kConv1W + 2 * b), t.cols[static_cast<std::size_t>(b)], d_act,
                          t.sizes[static_cast<std::size_t>(b)], t.sizes[static_cast<std::size_t>(b)], s,
                          grad(kConv1W + 2 * b), grad(kConv1B + 2 * b), b > 0 ? &d_in : nullptr);
        d_act = std::move(d_in);
    }
}

}  // namespace

Prediction predict(const Model& model, const Grid2D& image, bool with_visibility) {
    Trace t;
    forward(model, image, t);
    Prediction out;
    out.camera = t.camera;
    out.warp = t.warp;
    out.vertices = t.vertices;
    const auto ids = model.mesh().landmark_ids();
    out.lm_init.scheme = model.mesh().scheme;
    out.lm_refined.scheme = model.mesh().scheme;
    if (with_visibility) {
        out.visibility = visibility(model.mesh(), t.vertices, t.camera);
    }
    for (std::size_t l = 0; l < ids.size(); ++l) {
        const bool vis = !with_visibility || out.visibility[static_cast<std::size_t>(model.landmark_vertices()[l])];
        out.lm_init.points.push_back({ids[l], t.lm_init[l], vis});
        out.lm_refined.points.push_back({ids[l], t.lm_refined[l], vis});
    }
    return out;
}

namespace detail {

LossTerms sample_loss_scoped(const Model& model, const TrainSample& sample, const LossWeights& w, Gradients* grads,
                             bool upstream, bool branch) {
    Trace t;
    forward(model, sample.image, t);
    const std::size_t n_lm = t.lm_init.size();
    if (sample.true_lm2d.points.size() != n_lm || sample.true_vertices.size() != t.vertices.size()) {
        throw SchemeMismatch("sample ground truth does not match the model mesh");
    }
    std::vector<double> mask(n_lm, 1.0);
    double selected = static_cast<double>(n_lm);
    if (w.visibility_gated) {
        selected = 0.0;
        for (std::size_t l = 0; l < n_lm; ++l) {
            mask[l] = sample.true_lm2d.points[l].visible ? 1.0 : 0.0;
            selected += mask[l];
        }
    }
    LossTerms loss;
    const double nv = static_cast<double>(t.vertices.size());
    std::vector<Vec3> d_vertices(t.vertices.size());
    for (std::size_t i = 0; i < t.vertices.size(); ++i) {
        const Vec3 r = t.vertices[i] - sample.true_vertices[i];
        loss.loss_3d += r.squaredNorm() / nv;
        d_vertices[i] = 2.0 * w.w_3d / nv * r;
    }
    std::vector<Vec2> d_init(n_lm, Vec2::Zero());
    std::vector<Vec2> d_refined(n_lm, Vec2::Zero());
    if (selected > 0) {
        for (std::size_t l = 0; l < n_lm; ++l) {
            const Vec2 r0 = t.lm_init[l] - sample.true_lm2d.points[l].pos;
            const Vec2 r1 = t.lm_refined[l] - sample.true_lm2d.points[l].pos;
            loss.loss_proj += mask[l] * r0.squaredNorm() / selected;
            loss.loss_reg += mask[l] * r1.squaredNorm() / selected;
            d_init[l] = 2.0 * w.w_proj * mask[l] / selected * r0;
            d_refined[l] = 2.0 * w.w_reg * mask[l] / selected * r1;
        }
    }
    std::vector<Vec2> d_proj;
    if (w.texture_gradient && w.w_tex > 0) {
        const Points2 at_pred = project(t.camera, t.vertices);
        const auto pred = sample_bilinear(sample.image, at_pred);
        const auto truth = sample_bilinear(sample.image, project(sample.true_camera, sample.true_vertices));
        std::vector<ChannelVector> d_out(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const ChannelVector r = pred[i] - truth[i];
            loss.loss_tex += r.squaredNorm() / nv;
            d_out[i] = 2.0 * w.w_tex / nv * r;
        }
        d_proj = grad_wrt_coords(sample.image, at_pred, d_out);
    }
    loss.total = w.w_3d * loss.loss_3d + w.w_proj * loss.loss_proj + w.w_reg * loss.loss_reg +
                 (w.texture_gradient ? w.w_tex * loss.loss_tex : 0.0);
    if (grads != nullptr) {
        backward(model, t, d_vertices, d_init, d_refined, d_proj, GradScope{upstream, branch}, *grads);
    }
    return loss;
}

}  // namespace detail

std::vector<char> detail::kink_signature(const Model& model, const Grid2D& image) {
    Trace t;
    forward(model, image, t);
    std::vector<char> sig;
    auto add = [&](const nn::Mat& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            sig.push_back(m.data()[i] > Real(0) ? 1 : 0);
        }
    };
    for (const auto& a : t.acts) {
        add(a);
    }
    add(t.hidden);
    add(t.branch_act);
    add(t.features);
    for (const auto& c : t.feature_coords) {
        for (int k = 0; k < 2; ++k) {
            const int n = k == 0 ? t.feature_grid.width() : t.feature_grid.height();
            const double v = std::clamp(c[k], 0.0, static_cast<double>(n - 1));
            sig.push_back(static_cast<char>(std::floor(v)));
            sig.push_back(c[k] <= 0.0 ? 1 : (c[k] >= n - 1 ? 2 : 0));
        }
    }
    return sig;
}

LossTerms sample_loss(const Model& model, const TrainSample& sample, const LossWeights& weights, Gradients* grads) {
    return detail::sample_loss_scoped(model, sample, weights, grads, true, true);
}

}  // namespace facewarp
