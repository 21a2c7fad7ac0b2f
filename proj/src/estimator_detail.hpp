#pragma once

#include "facewarp/estimator.hpp"

#include <vector>

namespace facewarp::detail {

/// sample_loss restricted to the upstream groups (backbone and geometry
/// heads) and/or the landmark branch (feature branch and offset heads).
LossTerms sample_loss_scoped(const Model& model, const TrainSample& sample, const LossWeights& weights,
                             Gradients* grads, bool upstream, bool branch);

/// Everything that decides which smooth piece the loss is on: every ReLU's
/// on/off state and the texel cell of every feature sample. Finite
/// differences are only meaningful between parameters with equal signatures.
std::vector<char> kink_signature(const Model& model, const Grid2D& image);

}  // namespace facewarp::detail
