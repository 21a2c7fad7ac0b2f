#include "facewarp/audit.hpp"
#include "facewarp/bench.hpp"
#include "facewarp/error.hpp"
#include "facewarp/estimator.hpp"
#include "facewarp/metrics.hpp"
#include "facewarp/parallel.hpp"
#include "facewarp/refit.hpp"
#include "facewarp/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

using namespace facewarp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes.
constexpr int kExitFailed = 1;  // the command ran but its check failed
constexpr int kExitUsage = 2;
constexpr int kExitError = 3;   // library error (kind in the JSON payload)
constexpr int kExitInternal = 4;

void report_error(const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    out << j.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

FaceMesh default_mesh() {
#ifdef FACEWARP_ASSET_DIR
    const fs::path bundled = fs::path(FACEWARP_ASSET_DIR) / "mean_face.obj";
    if (fs::exists(bundled)) {
        return load_mesh(bundled);
    }
#endif
    return make_synthetic_face();
}

FaceMesh mesh_or_default(const std::string& path) { return path.empty() ? default_mesh() : load_mesh(path); }

// Images arrive as PNG; color inputs are averaged to gray.
Grid2D load_gray(const fs::path& path) {
    Grid2D g = load_png(path);
    if (g.channels() == 1) {
        return g;
    }
    Grid2D gray(g.width(), g.height(), 1);
    for (int r = 0; r < g.height(); ++r) {
        for (int c = 0; c < g.width(); ++c) {
            double sum = 0.0;
            for (int k = 0; k < g.channels(); ++k) {
                sum += g.at(r, c, k);
            }
            gray.at(r, c) = sum / g.channels();
        }
    }
    return gray;
}

bool is_dataset(const fs::path& p) { return fs::is_directory(p) && fs::exists(p / "samples.jsonl"); }

struct NamedImage {
    std::string id;
    fs::path path;
};

// A dataset directory, a directory of PNGs or a single PNG.
std::vector<NamedImage> list_images(const fs::path& source) {
    std::vector<NamedImage> out;
    if (is_dataset(source)) {
        std::ifstream in(source / "samples.jsonl");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            try {
                const auto j = json::parse(line);
                out.push_back({j.at("id").get<std::string>(), source / j.at("image").get<std::string>()});
            } catch (const json::exception& e) {
                throw ParseError((source / "samples.jsonl").string(), static_cast<std::size_t>(line_no), e.what());
            }
        }
    } else if (fs::is_directory(source)) {
        for (const auto& entry : fs::directory_iterator(source)) {
            if (entry.path().extension() == ".png") {
                out.push_back({entry.path().stem().string(), entry.path()});
            }
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    } else if (fs::exists(source)) {
        out.push_back({source.stem().string(), source});
    } else {
        throw IoError("no such file or directory: " + source.string());
    }
    if (out.empty()) {
        throw ArgumentError("no images found in " + source.string());
    }
    return out;
}

double max_reprojection_error(const CameraParams& cam, const FaceMesh& mesh, std::span<const Point3> vertices,
                              const LandmarkSet2D& lm) {
    const Points2 proj = project(cam, mesh.gather(vertices, mesh.landmark_vertices()));
    double worst = 0.0;
    for (std::size_t l = 0; l < proj.size(); ++l) {
        worst = std::max(worst, (proj[l] - lm.points[l].pos).norm());
    }
    return worst;
}

// ---- fit ----

struct FitArgs {
    std::string input;
    std::string mesh;
    std::string camera_init;
    std::string model;
    std::string out;
};

int run_fit(const FitArgs& a) {
    LandmarkSet2D lm;
    std::optional<CameraParams> cam;
    FaceMesh mesh;
    if (fs::path(a.input).extension() == ".png") {
        if (a.model.empty()) {
            throw ArgumentError("fitting an image needs --model to regress its landmarks");
        }
        const Model model = load_model(a.model);
        const Prediction p = predict(model, load_gray(a.input), false);
        lm = p.lm_refined;
        cam = p.camera;
        mesh = a.mesh.empty() ? model.mesh() : load_mesh(a.mesh);
    } else {
        lm = load_landmarks(a.input);
        mesh = mesh_or_default(a.mesh);
    }
    if (!a.camera_init.empty()) {
        cam = read_json(a.camera_init).get<CameraParams>();
    }
    if (lm.scheme != mesh.scheme) {
        throw SchemeMismatch("landmarks use " + to_string(lm.scheme) + " but the mesh uses " +
                             to_string(mesh.scheme));
    }
    const std::string camera_source = cam ? (a.camera_init.empty() ? "model" : "file") : "dlt";
    if (!cam) {
        cam = estimate_camera_dlt(mesh.gather(mesh.vertices, mesh.landmark_vertices()), lm.positions());
    }
    const RefitResult r = refit_model(mesh, WarpChain{}, *cam, lm);
    const Points3 fitted = apply_warp(r.refit_warp, mesh.vertices);
    const fs::path out(a.out);
    ensure_dir(out);
    save_mesh(mesh, fitted, out / "mesh.obj");
    write_json(json(*cam), out / "camera.json");
    write_json(json(r.refit_warp), out / "warp.json");
    const json summary{{"camera_source", camera_source},
                       {"landmarks", lm.size()},
                       {"max_reprojection_px", max_reprojection_error(*cam, mesh, fitted, lm)},
                       {"yaw_deg", estimate_yaw_degrees(*cam)},
                       {"behind_camera_ids", r.behind_camera_ids},
                       {"mesh", (out / "mesh.obj").string()},
                       {"camera", (out / "camera.json").string()}};
    write_json(summary, out / "fit.json");
    print(summary);
    return 0;
}

// ---- synth ----

struct SynthArgs {
    std::size_t count = 100;
    std::uint64_t seed = 1;
    std::string out_dir;
    std::string mesh;
    std::string config;
};

int run_synth(const SynthArgs& a) {
    SynthConfig config;
    if (!a.config.empty()) {
        config = read_json(a.config).get<SynthConfig>();
    }
    config.validate();
    const FaceMesh mesh = mesh_or_default(a.mesh);
    const auto samples = synth_generate(mesh, config, a.count, a.seed);
    save_dataset(mesh, samples, a.out_dir);
    std::array<int, 3> bins{};
    for (const auto& s : samples) {
        ++bins[static_cast<std::size_t>(pose_bin(s.yaw_deg))];
    }
    print({{"count", samples.size()}, {"seed", a.seed}, {"out_dir", a.out_dir}, {"pose_bins", bins}});
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string log;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    EstimatorConfig config;
    if (!a.config.empty()) {
        config = read_json(a.config).get<EstimatorConfig>();
    }
    if (a.seed) {
        config.seed = *a.seed;
    }
    config.validate();
    const Dataset data = load_dataset(a.data);
    Model model(config, data.mesh);
    const TrainReport report = train(model, data.samples, [&](const TrainLogRow& row, int epoch) {
        if (!a.quiet) {
            std::cerr << "phase " << row.phase << " epoch " << epoch << " loss " << row.loss.total << " lr "
                      << row.learning_rate << '\n';
        }
    });
    const fs::path out(a.out);
    if (out.has_parent_path()) {
        ensure_dir(out.parent_path());
    }
    save_model(model, out);
    const fs::path log = a.log.empty() ? fs::path(out).replace_extension(".log.csv") : fs::path(a.log);
    write_training_log(report, log);
    print({{"model", out.string()},
           {"log", log.string()},
           {"samples", data.samples.size()},
           {"skipped_samples", report.skipped_samples},
           {"final_loss", report.log.empty() ? 0.0 : report.log.back().loss.total}});
    return 0;
}

// ---- infer ----

struct InferArgs {
    std::string model;
    std::string image;
    std::string out;
};

int run_infer(const InferArgs& a) {
    const Model model = load_model(a.model);
    const Prediction p = predict(model, load_gray(a.image));
    const fs::path out(a.out);
    ensure_dir(out);
    save_landmarks(p.lm_refined, out / "landmarks.json");
    save_landmarks(p.lm_init, out / "landmarks_init.json");
    save_mesh(model.mesh(), p.vertices, out / "mesh.obj");
    write_json(json(p.camera), out / "camera.json");
    write_json(json(std::vector<bool>(p.visibility.begin(), p.visibility.end())), out / "visibility.json");
    const auto visible = std::count(p.visibility.begin(), p.visibility.end(), true);
    print({{"landmarks", (out / "landmarks.json").string()},
           {"mesh", (out / "mesh.obj").string()},
           {"yaw_deg", estimate_yaw_degrees(p.camera)},
           {"visible_vertices", visible},
           {"vertices", p.visibility.size()}});
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string bboxes;
    std::string mode = "visible";
    std::string stage = "refined";
    std::string report;
    int resamples = 10;
    std::uint64_t seed = 1;
    double ced_max = 0.2;
};

struct TruthItem {
    std::string id;
    LandmarkSet2D lm;
    BBox bbox;
    double yaw_deg = 0.0;
    fs::path image;
};

std::map<std::string, std::array<double, 3>> read_bboxes(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::map<std::string, std::array<double, 3>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.rfind("id,", 0) == 0) {
            continue;
        }
        std::stringstream ss(line);
        std::string id;
        std::string field;
        std::vector<double> v;
        std::getline(ss, id, ',');
        try {
            while (std::getline(ss, field, ',')) {
                v.push_back(std::stod(field));
            }
        } catch (const std::exception&) {
            throw ParseError(path.string(), line_no, "expected id,w,h[,yaw_deg]");
        }
        if (v.size() < 2 || v.size() > 3) {
            throw ParseError(path.string(), line_no, "expected id,w,h[,yaw_deg]");
        }
        out[id] = {v[0], v[1], v.size() == 3 ? v[2] : 0.0};
    }
    return out;
}

std::vector<TruthItem> load_truth(const EvalArgs& a) {
    std::vector<TruthItem> items;
    const fs::path truth(a.truth);
    if (is_dataset(truth)) {
        std::ifstream in(truth / "samples.jsonl");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            try {
                const auto j = json::parse(line);
                const auto box = j.at("bbox").get<std::array<double, 2>>();
                items.push_back({j.at("id").get<std::string>(), j.at("landmarks").get<LandmarkSet2D>(),
                                 {box[0], box[1]}, j.at("yaw_deg").get<double>(),
                                 truth / j.at("image").get<std::string>()});
            } catch (const json::exception& e) {
                throw ParseError((truth / "samples.jsonl").string(), line_no, e.what());
            }
        }
        return items;
    }
    if (!fs::is_directory(truth)) {
        throw IoError("truth must be a dataset or a directory of landmark files: " + truth.string());
    }
    if (a.bboxes.empty()) {
        throw ArgumentError("--bboxes is required when the truth is a directory of landmark files");
    }
    const auto boxes = read_bboxes(a.bboxes);
    for (const auto& [id, box] : boxes) {
        const fs::path file = truth / (id + ".json");
        const fs::path pts = truth / (id + ".pts");
        items.push_back({id, load_landmarks(fs::exists(file) ? file : pts), {box[0], box[1]}, box[2], {}});
    }
    return items;
}

int run_eval(const EvalArgs& a) {
    const NmeMode mode = nme_mode_from_string(a.mode);
    if (a.stage != "refined" && a.stage != "init") {
        throw ArgumentError("--stage must be refined or init");
    }
    const std::vector<TruthItem> truth = load_truth(a);
    std::vector<LandmarkSet2D> preds(truth.size());
    const fs::path pred(a.pred);
    if (pred.extension() == ".fwm") {
        const Model model = load_model(pred);
        for (const auto& t : truth) {
            if (t.image.empty()) {
                throw ArgumentError("model predictions need a dataset as the truth");
            }
        }
        parallel_for(truth.size(), 1, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const Prediction p = predict(model, load_gray(truth[i].image));
                preds[i] = a.stage == "init" ? p.lm_init : p.lm_refined;
            }
        });
    } else {
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const fs::path file = pred / (truth[i].id + ".json");
            preds[i] = load_landmarks(fs::exists(file) ? file : pred / (truth[i].id + ".pts"));
        }
    }
    std::vector<NmeRecord> records;
    std::vector<std::string> excluded;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        try {
            records.push_back(make_record(truth[i].id, preds[i], truth[i].lm, truth[i].bbox, truth[i].yaw_deg, mode));
        } catch (const NoLandmarks& e) {
            std::cerr << "warning: " << e.what() << "; sample excluded\n";
            excluded.push_back(truth[i].id);
        }
    }
    if (records.empty()) {
        throw NoLandmarks("no sample could be evaluated");
    }
    const PoseTable table = pose_table(records);
    const auto grid = threshold_grid(a.ced_max, 100);
    double mean = 0.0;
    for (const auto& r : records) {
        mean += 100.0 * r.nme;
    }
    mean /= static_cast<double>(records.size());
    json bins = json::object();
    for (std::size_t b = 0; b < 3; ++b) {
        bins[kPoseBinNames[b]] = table.bin_mean[b] ? json(*table.bin_mean[b]) : json(nullptr);
    }
    json summary{{"samples", records.size()},
                 {"excluded", excluded},
                 {"mode", to_string(mode)},
                 {"mean_nme_percent", mean},
                 {"pose_bins_percent", bins},
                 {"pose_mean_percent", table.mean},
                 {"pose_std_percent", std::isnan(table.std) ? json(nullptr) : json(table.std)}};
    if (!a.report.empty()) {
        const fs::path dir(a.report);
        ensure_dir(dir);
        write_records_csv(records, dir / "records.csv");
        write_pose_table_csv(table, dir / "pose_table.csv");
        write_ced_csv(ced(records, grid), dir / "ced.csv");
        write_ced_csv(ced_balanced(records, grid, a.resamples, a.seed), dir / "ced_balanced.csv");
        write_json(summary, dir / "summary.json");
        summary["report"] = dir.string();
    }
    print(summary);
    return 0;
}

// ---- gradcheck ----

struct GradcheckArgs {
    std::string module = "all";
    std::uint64_t seed = 1;
    int seeds = 20;
};

int run_gradcheck(const GradcheckArgs& a) {
    const auto results = run_audits(a.module, a.seed, a.seeds);
    json audits = json::array();
    bool ok = true;
    for (const auto& r : results) {
        ok = ok && r.passed();
        audits.push_back({{"name", r.name},
                          {"seeds", r.seeds},
                          {"checks", r.checks},
                          {"skipped", r.skipped},
                          {"max_rel_error", r.max_rel_error},
                          {"tolerance", r.tolerance},
                          {"seconds", r.seconds},
                          {"passed", r.passed()}});
    }
    print({{"module", a.module}, {"seed", a.seed}, {"passed", ok}, {"audits", audits}});
    return ok ? 0 : kExitFailed;
}

// ---- bench ----

struct BenchArgs {
    std::string model;
    std::string images;
    std::string mesh;
    int warmup = 2;
    int reps = 10;
    std::size_t items = 5;
    std::uint64_t seed = 1;
    double budget_ms = 0.0;
};

int run_bench(const BenchArgs& a) {
    BenchReport report;
    if (!a.model.empty()) {
        if (a.images.empty()) {
            throw ArgumentError("bench --model needs --images");
        }
        const Model model = load_model(a.model);
        std::vector<Grid2D> images;
        for (const auto& img : list_images(a.images)) {
            images.push_back(load_gray(img.path));
        }
        report = bench(
            "estimator", images.size(), [&](std::size_t i) { (void)predict(model, images[i]); }, a.warmup,
            a.reps);
    } else {
        const FaceMesh mesh = a.mesh.empty() ? bench_mesh() : load_mesh(a.mesh);
        report = bench_geometry(mesh, a.items, a.warmup, a.reps, a.seed);
        report.pipeline += " (" + std::to_string(mesh.vertices.size()) + " vertices)";
    }
    json j = report;
    const bool ok = a.budget_ms <= 0.0 || report.mean_s * 1e3 < a.budget_ms;
    if (a.budget_ms > 0.0) {
        j["budget_ms"] = a.budget_ms;
        j["within_budget"] = ok;
    }
    print(j);
    return ok ? 0 : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Face alignment geometry kernels: fitting, synthetic data, training, evaluation and audits"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "facewarp 1.0");
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (overrides FACEWARP_THREADS)")
        ->check(CLI::NonNegativeNumber);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the mesh to 2D landmarks (or to an image with --model)");
    fit_cmd->add_option("input", fit_args.input, "Landmark file (.json/.pts) or PNG image")->required();
    fit_cmd->add_option("--mesh", fit_args.mesh, "Generic mesh (default: bundled mean face)");
    fit_cmd->add_option("--camera-init", fit_args.camera_init, "Camera JSON (default: DLT from the landmarks)");
    fit_cmd->add_option("--model", fit_args.model, "Trained model, required for image input");
    fit_cmd->add_option("--out", fit_args.out, "Output directory")->required();

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth_cmd->add_option("--count", synth_args.count, "Number of samples")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth_args.seed, "Random seed");
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
    synth_cmd->add_option("--mesh", synth_args.mesh, "Generic mesh (default: bundled mean face)");
    synth_cmd->add_option("--config", synth_args.config, "Generator settings JSON");

    TrainArgs train_args;
    std::uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "Train the estimator on a synthetic dataset");
    train_cmd->add_option("--config", train_args.config, "Estimator settings JSON");
    train_cmd->add_option("--data", train_args.data, "Dataset directory")->required();
    train_cmd->add_option("--out", train_args.out, "Model file (.fwm)")->required();
    train_cmd->add_option("--log", train_args.log, "Training log CSV (default: <out>.log.csv)");
    auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Initialization and shuffling seed");
    train_cmd->add_flag("--quiet", train_args.quiet, "No per-epoch progress");

    InferArgs infer_args;
    auto* infer_cmd = app.add_subcommand("infer", "Run a trained model on one image");
    infer_cmd->add_option("--model", infer_args.model, "Model file")->required();
    infer_cmd->add_option("--image", infer_args.image, "PNG image")->required();
    infer_cmd->add_option("--out", infer_args.out, "Output directory")->required();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "NME, pose table and CED curves");
    eval_cmd->add_option("--pred", eval_args.pred, "Directory of landmark files, or a model file (.fwm)")
        ->required();
    eval_cmd->add_option("--truth", eval_args.truth, "Dataset directory or directory of landmark files")
        ->required();
    eval_cmd->add_option("--bboxes", eval_args.bboxes, "CSV id,w,h[,yaw_deg] for landmark-file truth");
    eval_cmd->add_option("--mode", eval_args.mode, "visible or all")
        ->check(CLI::IsMember({"visible", "all"}));
    eval_cmd->add_option("--stage", eval_args.stage, "Model output to score: refined or init")
        ->check(CLI::IsMember({"refined", "init"}));
    eval_cmd->add_option("--report", eval_args.report, "Report directory for the CSV files");
    eval_cmd->add_option("--resamples", eval_args.resamples, "Pose-balanced CED resamples")
        ->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", eval_args.seed, "Resampling seed");
    eval_cmd->add_option("--ced-max", eval_args.ced_max, "Largest CED threshold (fraction)")
        ->check(CLI::PositiveNumber);

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference audits of every analytic gradient");
    grad_cmd->add_option("--module", grad_args.module, "all, proj, tps, sampler or e2e")
        ->check(CLI::IsMember({"all", "proj", "tps", "sampler", "e2e"}));
    grad_cmd->add_option("--seed", grad_args.seed, "First seed");
    grad_cmd->add_option("--seeds", grad_args.seeds, "Random configurations per audit")
        ->check(CLI::PositiveNumber);

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Single-threaded, one-at-a-time latency");
    bench_cmd->add_option("--model", bench_args.model, "Model file (default: geometry-only pipeline)");
    bench_cmd->add_option("--images", bench_args.images, "PNG, directory of PNGs or dataset");
    bench_cmd->add_option("--mesh", bench_args.mesh, "Mesh for the geometry pipeline (default: 50k vertices)");
    bench_cmd->add_option("--items", bench_args.items, "Random views for the geometry pipeline")
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--warmup", bench_args.warmup, "Untimed passes")->check(CLI::NonNegativeNumber);
    bench_cmd->add_option("--reps", bench_args.reps, "Timed passes")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench_args.seed, "Random seed for the geometry pipeline");
    bench_cmd->add_option("--budget-ms", bench_args.budget_ms, "Fail when the mean latency exceeds this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("UsageError", e.what(), kExitUsage);
        return kExitUsage;
    }

    try {
        if (threads > 0) {
            set_thread_override(threads);
        }
        if (*fit_cmd) {
            return run_fit(fit_args);
        }
        if (*synth_cmd) {
            return run_synth(synth_args);
        }
        if (*train_cmd) {
            if (*train_seed_opt) {
                train_args.seed = train_seed;
            }
            return run_train(train_args);
        }
        if (*infer_cmd) {
            return run_infer(infer_args);
        }
        if (*eval_cmd) {
            return run_eval(eval_args);
        }
        if (*grad_cmd) {
            return run_gradcheck(grad_args);
        }
        return run_bench(bench_args);
    } catch (const Error& e) {
        report_error(e.kind(), e.what(), kExitError);
        return kExitError;
    } catch (const std::exception& e) {
        report_error("InternalError", e.what(), kExitInternal);
        return kExitInternal;
    }
}
