#pragma once

#include <vector>

#include "awrkit/nn/tensor.hpp"

namespace awrkit::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double weight_decay = 5e-4; // classic L2 form: g <- g + wd * theta
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    long step = 0;
};

/// One bias-corrected Adam update; increments state.step before use, so the
/// first call runs with t = 1. Moments are created lazily to match `params`.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& config);

} // namespace awrkit::nn
