#include "facewarp/error.hpp"
#include "facewarp/estimator.hpp"
#include "facewarp/parallel.hpp"
#include "estimator_detail.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>

namespace facewarp {

namespace {

bool in_phase(ParamGroup g, int phase) {
    const bool upstream = g == ParamGroup::Backbone || g == ParamGroup::CameraHead || g == ParamGroup::TpsHead;
    return phase == 1 ? upstream : !upstream;
}

double full_total(const LossTerms& l, const LossWeights& w) {
    return w.w_3d * l.loss_3d + w.w_proj * l.loss_proj + w.w_reg * l.loss_reg +
           (w.texture_gradient ? w.w_tex * l.loss_tex : 0.0);
}

}  // namespace

TrainReport train(Model& model, std::span<const TrainSample> data, const TrainProgress& progress) {
    const EstimatorConfig& c = model.config();
    c.validate();
    if (data.empty()) {
        throw ArgumentError("training needs at least one sample");
    }
    TrainReport report;
    auto& params = model.parameters();
    Gradients velocity = zero_gradients(model);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(c.batch_size), data.size());
    std::vector<Gradients> per_sample(batch, zero_gradients(model));
    std::vector<LossTerms> per_loss(batch);
    std::vector<char> ok(batch);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(c.seed ^ 0x5eed5eedULL);

    int iteration = 0;
    double initial = -1.0;
    int bad_epochs = 0;

    for (int phase = 1; phase <= 2; ++phase) {
        const int epochs = phase == 1 ? c.phase1_epochs : c.phase2_epochs;
        const double lr0 = phase == 1 ? c.lr_phase1 : c.lr_phase2;
        LossWeights w = c.weights;
        if (phase == 1) {
            w.w_reg = 0.0;
        } else {
            w.w_3d = 0.0;
            w.w_proj = 0.0;
            w.w_tex = 0.0;
        }
        for (auto& v : velocity) {
            v.setZero();
        }
        for (int epoch = 0; epoch < epochs; ++epoch) {
            const double lr = lr0 * std::pow(c.lr_decay, epoch / c.lr_step);
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            LossTerms epoch_sum;
            int epoch_count = 0;
            int epoch_skipped = 0;
            for (std::size_t start = 0; start < order.size(); start += batch) {
                const std::size_t n = std::min(batch, order.size() - start);
                parallel_for(n, 1, [&](std::size_t b0, std::size_t b1) {
                    for (std::size_t b = b0; b < b1; ++b) {
                        for (auto& g : per_sample[b]) {
                            g.setZero();
                        }
                        try {
                            per_loss[b] = detail::sample_loss_scoped(model, data[order[start + b]], w, &per_sample[b],
                                                                     phase == 1, phase == 2);
                            ok[b] = 1;
                        } catch (const DegenerateDepth&) {
                            ok[b] = 0;
                        }
                    }
                });
                // Reduce in sample order so the result never depends on threading.
                Gradients& sum = per_sample[0];
                int used = ok[0] ? 1 : 0;
                if (!ok[0]) {
                    for (auto& g : sum) {
                        g.setZero();
                    }
                }
                LossTerms batch_loss = ok[0] ? per_loss[0] : LossTerms{};
                for (std::size_t b = 1; b < n; ++b) {
                    if (!ok[b]) {
                        continue;
                    }
                    ++used;
                    for (std::size_t k = 0; k < sum.size(); ++k) {
                        sum[k] += per_sample[b][k];
                    }
                    batch_loss.loss_3d += per_loss[b].loss_3d;
                    batch_loss.loss_proj += per_loss[b].loss_proj;
                    batch_loss.loss_reg += per_loss[b].loss_reg;
                    batch_loss.loss_tex += per_loss[b].loss_tex;
                }
                const int skipped = static_cast<int>(n) - used;
                epoch_skipped += skipped;
                report.skipped_samples += skipped;
                if (used == 0) {
                    continue;
                }
                const Real inv = Real(1) / static_cast<Real>(used);
                double norm2 = 0.0;
                for (std::size_t k = 0; k < sum.size(); ++k) {
                    if (in_phase(params[k].group, phase)) {
                        sum[k] *= inv;
                        norm2 += static_cast<double>(sum[k].squaredNorm());
                    }
                }
                const double norm = std::sqrt(norm2);
                const double clip = c.clip_norm > 0 && norm > c.clip_norm ? c.clip_norm / norm : 1.0;
                for (std::size_t k = 0; k < sum.size(); ++k) {
                    if (!in_phase(params[k].group, phase)) {
                        continue;
                    }
                    velocity[k] = static_cast<Real>(c.momentum) * velocity[k] - static_cast<Real>(lr * clip) * sum[k];
                    params[k].value += velocity[k];
                }
                batch_loss.loss_3d /= used;
                batch_loss.loss_proj /= used;
                batch_loss.loss_reg /= used;
                batch_loss.loss_tex /= used;
                batch_loss.total = full_total(batch_loss, c.weights);
                report.log.push_back({iteration++, phase, batch_loss, lr});
                epoch_sum.loss_3d += batch_loss.loss_3d * used;
                epoch_sum.loss_proj += batch_loss.loss_proj * used;
                epoch_sum.loss_reg += batch_loss.loss_reg * used;
                epoch_sum.loss_tex += batch_loss.loss_tex * used;
                epoch_count += used;
                if (initial < 0) {
                    initial = batch_loss.total;
                }
            }
            if (epoch_skipped > 0) {
                std::cerr << "warning: skipped " << epoch_skipped
                          << " samples with landmarks on the camera plane in phase " << phase << " epoch " << epoch
                          << "\n";
            }
            if (epoch_count == 0) {
                throw TrainingDiverged("every sample in phase " + std::to_string(phase) + " epoch " +
                                       std::to_string(epoch) + " was degenerate");
            }
            TrainLogRow mean{iteration, phase, {}, lr};
            mean.loss.loss_3d = epoch_sum.loss_3d / epoch_count;
            mean.loss.loss_proj = epoch_sum.loss_proj / epoch_count;
            mean.loss.loss_reg = epoch_sum.loss_reg / epoch_count;
            mean.loss.loss_tex = epoch_sum.loss_tex / epoch_count;
            mean.loss.total = full_total(mean.loss, c.weights);
            if (!std::isfinite(mean.loss.total) || mean.loss.total > 1e3 * initial) {
                if (++bad_epochs >= 3) {
                    throw TrainingDiverged("epoch loss " + std::to_string(mean.loss.total) +
                                           " exceeded 1000x the initial loss " + std::to_string(initial) +
                                           " for 3 consecutive epochs (phase " + std::to_string(phase) +
                                           ", epoch " + std::to_string(epoch) + ")");
                }
            } else {
                bad_epochs = 0;
            }
            if (progress) {
                progress(mean, epoch);
            }
        }
    }
    return report;
}

void write_training_log(const TrainReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    out << "iteration,phase,total_loss,loss_3d,loss_proj,loss_reg,loss_tex,learning_rate\n";
    out << std::setprecision(10);
    for (const auto& row : report.log) {
        out << row.iteration << ',' << row.phase << ',' << row.loss.total << ',' << row.loss.loss_3d << ','
            << row.loss.loss_proj << ',' << row.loss.loss_reg << ',' << row.loss.loss_tex << ','
            << row.learning_rate << '\n';
    }
}

}  // namespace facewarp
