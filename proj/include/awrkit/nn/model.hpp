#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "awrkit/rep.hpp"
#include "awrkit/nn/tape.hpp"

namespace awrkit::nn {

struct ModelConfig {
    int input_size = 64;
    int dense_size = 32;
    // Stem width followed by one stride-2 stage per additional entry.
    std::vector<int> channels{16, 32, 64};
    int trunk_convs = 1;
    int head_kernel = 3;
    int joints = 14;
    RepType rep;
    // Softmax temperature of the AWR aggregation, used for training and decoding.
    double awr_temperature = 0.02;

    /// Throws UsageError for an inconsistent size ratio or channel list.
    void validate() const;
    int downsample_steps() const { return static_cast<int>(channels.size()) - 1; }
    int bottom_size() const { return input_size >> downsample_steps(); }
};

/// One separately-convolved output component, with `per_joint` channels per joint.
struct HeadSpec {
    std::string name;
    int per_joint = 1;
    bool probability = false; // trained with L2 on hand pixels
    bool zero_init = false;
    bool weight_logits = false; // P weight map, not part of the DenseRep
};

std::vector<HeadSpec> head_layout(RepTag tag);

struct Parameter {
    std::string name;
    Tensor value;
};

/// Fully convolutional encoder-decoder: strided conv stack, conv trunk, nearest
/// upsampling + conv back to dense_size, then one conv head per component.
class Model {
public:
    Model() = default;
    Model(ModelConfig config, std::uint64_t seed);

    struct Output {
        std::vector<Var> heads; // N x (J * per_joint) x D x D, in head_layout order
        int batch = 0;
    };

    /// Records the forward pass. Parameters enter as leaves (recorded in
    /// `param_vars`) with gradients only when `trainable`.
    Output forward(Tape& tape, const Tensor& batch, std::vector<Var>& param_vars, bool trainable) const;

    /// Dense maps of sample `n`, in DenseRep channel order.
    DenseRep dense_rep(const Output& out, int n) const;
    /// P weight-head logits of sample `n` (J x D x D); empty for other types.
    std::vector<double> weight_logits(const Output& out, int n) const;

    const ModelConfig& config() const noexcept { return config_; }
    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const;
    std::uint64_t seed() const noexcept { return seed_; }

private:
    struct Layer {
        int in = 0, out = 0, kernel = 3, stride = 1;
        bool upsample = false;
        bool activation = true;
        int weight = -1, bias = -1; // parameter indices
    };

    ModelConfig config_;
    std::uint64_t seed_ = 0;
    std::vector<Parameter> params_;
    std::vector<Layer> body_;
    std::vector<Layer> heads_;
    std::vector<HeadSpec> head_specs_;
};

Model build_model(const ModelConfig& config, std::uint64_t seed);

/// Tape op: AWR-decoded joints (N x J x 3, normalized) from the model heads,
/// differentiable with respect to every head.
Var awr_joints(const Model& model, const Model::Output& out, std::span<const DenseGrid> grids);

/// Dense-loss targets and per-element weights laid out like the model heads.
struct HeadTargets {
    std::vector<Tensor> targets;
    std::vector<Tensor> weights;
};

HeadTargets head_targets(const ModelConfig& config, std::span<const DenseRep* const> reps,
                         std::span<const DenseGrid* const> grids);

} // namespace awrkit::nn
