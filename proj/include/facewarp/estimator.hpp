#pragma once

#include "facewarp/landmarks.hpp"
#include "facewarp/mesh.hpp"
#include "facewarp/projection.hpp"
#include "facewarp/sampler.hpp"
#include "facewarp/tps.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace facewarp {

#ifdef FACEWARP_ESTIMATOR_FLOAT
using Real = float;
#else
using Real = double;
#endif

using RealMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

struct LossWeights {
    double w_3d = 1.0;
    double w_proj = 1.0;
    double w_reg = 1.0;
    /// Only landmarks flagged visible in the ground truth contribute to the
    /// two landmark terms.
    bool visibility_gated = false;
    /// Photometric term: the input image sampled at the predicted projected
    /// vertices against the image at the true projections. Its gradient
    /// reaches the camera and shape heads through the sampler's coordinate
    /// gradient. Off by default; w_tex only applies when it is on.
    bool texture_gradient = false;
    double w_tex = 1.0;
};

struct EstimatorConfig {
    int input_size = 64;
    /// Four 3x3 conv blocks; the first three have stride 2.
    std::array<int, 4> conv_channels{16, 32, 32, 64};
    int fc_width = 128;
    /// Which conv block (1-based) feeds the landmark feature branch.
    int feature_block = 2;
    int branch_channels = 32;
    /// D, channels of the landmark feature map.
    int feature_dim = 64;

    /// Camera the untrained model predicts.
    ViewPose initial_pose{0.0, 0.0, 0.0, 19.0, Vec2(31.5, 31.5), 0.1};
    /// Head outputs are multiplied by these before being added to the
    /// initial camera / used as TPS parameters.
    double camera_scale_linear = 10.0;
    double camera_scale_perspective = 0.3;
    double tps_scale = 0.05;

    LossWeights weights;

    int batch_size = 16;
    int phase1_epochs = 40;
    int phase2_epochs = 15;
    double lr_phase1 = 2e-4;
    double lr_phase2 = 1e-3;
    /// Learning rate is multiplied by lr_decay every lr_step epochs of a phase.
    double lr_decay = 0.3;
    int lr_step = 15;
    double momentum = 0.9;
    /// Global gradient norm cap per minibatch (<= 0 disables).
    double clip_norm = 50.0;
    std::uint64_t seed = 1;

    /// Throws ArgumentError on inconsistent settings.
    void validate() const;
};

void to_json(nlohmann::json& j, const EstimatorConfig& c);
void from_json(const nlohmann::json& j, EstimatorConfig& c);

enum class ParamGroup { Backbone, CameraHead, TpsHead, FeatureBranch, OffsetHeads };
std::string to_string(ParamGroup group);

struct Parameter {
    std::string name;
    ParamGroup group = ParamGroup::Backbone;
    RealMatrix value;
};

/// One training / evaluation example with full ground truth.
struct TrainSample {
    std::string id;
    Grid2D image;
    CameraParams true_camera;
    TpsWarp3D true_warp;
    LandmarkSet2D true_lm2d;
    Points3 true_vertices;
    double yaw_deg = 0.0;
    /// Bounding box of the projected true vertices.
    double bbox_w = 0.0;
    double bbox_h = 0.0;
};

class Model {
public:
    Model() = default;
    /// Fresh model: He-initialized backbone from config.seed, zero heads.
    Model(EstimatorConfig config, FaceMesh mesh);

    const EstimatorConfig& config() const { return config_; }
    EstimatorConfig& config() { return config_; }
    const FaceMesh& mesh() const { return mesh_; }
    const TpsBasis& vertex_basis() const { return basis_; }
    CameraParams initial_camera() const { return initial_camera_; }

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    /// Throws ArgumentError for unknown names.
    Parameter& parameter(const std::string& name);
    const Parameter& parameter(const std::string& name) const;
    std::size_t scalar_count() const;

    int landmark_count() const { return static_cast<int>(landmark_vertices_.size()); }
    const std::vector<int>& landmark_vertices() const { return landmark_vertices_; }

private:
    EstimatorConfig config_;
    FaceMesh mesh_;
    TpsBasis basis_;
    CameraParams initial_camera_;
    std::vector<int> landmark_vertices_;
    std::vector<Parameter> params_;
};

struct Prediction {
    CameraParams camera;
    TpsWarp3D warp;
    Points3 vertices;
    LandmarkSet2D lm_init;
    LandmarkSet2D lm_refined;
    /// Per-vertex mask; landmark visibility flags are copied from it.
    VisibilityMask visibility;
};

/// Throws ArgumentError for a wrong image size and DegenerateDepth when a
/// landmark lands on the camera plane.
Prediction predict(const Model& model, const Grid2D& image, bool with_visibility = true);

struct LossTerms {
    double total = 0.0;
    double loss_3d = 0.0;
    double loss_proj = 0.0;
    double loss_reg = 0.0;
    /// Zero unless the texture term is enabled.
    double loss_tex = 0.0;
};

/// Same shapes as Model::parameters(), in the same order.
using Gradients = std::vector<RealMatrix>;
Gradients zero_gradients(const Model& model);

/// Per-point mean losses of one sample. When `grads` is given, dL/dparams is
/// added to it. Throws DegenerateDepth like predict.
LossTerms sample_loss(const Model& model, const TrainSample& sample, const LossWeights& weights,
                      Gradients* grads = nullptr);

struct TrainLogRow {
    int iteration = 0;
    int phase = 1;
    LossTerms loss;
    double learning_rate = 0.0;
};

struct TrainReport {
    std::vector<TrainLogRow> log;
    int skipped_samples = 0;
};

using TrainProgress = std::function<void(const TrainLogRow& epoch_mean, int epoch)>;

/// Two phases of minibatch SGD with momentum. Phase 1 updates the backbone
/// and both geometry heads on w_3d and w_proj; phase 2 updates only the
/// feature branch and offset heads on w_reg, leaving everything else
/// bitwise untouched. Throws TrainingDiverged when the epoch loss exceeds
/// 1000x the first epoch's for 3 consecutive epochs.
TrainReport train(Model& model, std::span<const TrainSample> data, const TrainProgress& progress = {});

/// CSV: iteration,phase,total_loss,loss_3d,loss_proj,loss_reg,loss_tex,learning_rate
void write_training_log(const TrainReport& report, const std::filesystem::path& path);

/// Binary container: magic "FWMODEL1", uint32 version, uint32 JSON length,
/// JSON header (config and mesh annotations), uint32 tensor count, then per
/// tensor: uint32 name length, name, uint32 rank, int64 dims, float64 data.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace facewarp
