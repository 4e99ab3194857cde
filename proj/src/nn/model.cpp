#include "awrkit/nn/model.hpp"

#include <cmath>
#include <memory>

#include "awrkit/awr.hpp"
#include "awrkit/error.hpp"
#include "awrkit/nn/ops.hpp"
#include "awrkit/random.hpp"

namespace awrkit::nn {

namespace {

// DenseRep channel of a head's first per-joint channel; -1 for the P weight head.
int dense_channel(RepTag tag, const HeadSpec& h) {
    if (h.weight_logits) return -1;
    switch (tag) {
    case RepTag::P: return chan::pose_x;
    case RepTag::H1:
    case RepTag::H2: return h.name == "heatmap" ? chan::prob : chan::heat_depth;
    case RepTag::O1:
    case RepTag::O2:
        if (h.name == "unit") return chan::unit2_x;
        return h.name == "closeness" ? chan::close2 : chan::plane_depth;
    case RepTag::O3: return h.name == "unit" ? chan::unit3_x : chan::close3;
    }
    return -1;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

} // namespace

std::vector<HeadSpec> head_layout(RepTag tag) {
    switch (tag) {
    case RepTag::P: return {{"pose", 3}, {"weight", 1, false, true, true}};
    case RepTag::H1:
    case RepTag::H2: return {{"heatmap", 1, true}, {"depth", 1}};
    case RepTag::O1:
    case RepTag::O2: return {{"unit", 2}, {"closeness", 1}, {"depth", 1}};
    case RepTag::O3: return {{"unit", 3}, {"closeness", 1}};
    }
    return {};
}

void ModelConfig::validate() const {
    rep.validate();
    if (joints < 1) throw UsageError("model: at least one joint required");
    if (channels.empty()) throw UsageError("model: channel list is empty");
    for (int c : channels)
        if (c < 1) throw UsageError("model: channel widths must be positive");
    if (trunk_convs < 0) throw UsageError("model: trunk_convs must be non-negative");
    if (head_kernel < 1 || head_kernel % 2 == 0) throw UsageError("model: head kernel must be odd");
    if (!(awr_temperature > 0.0)) throw UsageError("model: AWR temperature must be positive");
    if (input_size < 8 || dense_size < 1 || input_size % dense_size != 0)
        throw UsageError("model: dense size must divide input size");
    if (input_size % (1 << downsample_steps()) != 0)
        throw UsageError("model: input size not divisible by the downsampling factor");
    const int bottom = bottom_size();
    if (bottom > dense_size || dense_size % bottom != 0 || !is_power_of_two(dense_size / bottom))
        throw UsageError("model: dense size must be a power-of-two multiple of the bottleneck size " +
                         std::to_string(bottom));
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    head_specs_ = head_layout(config_.rep.tag);

    auto add_layer = [this](std::vector<Layer>& list, Layer l, const std::string& name, bool zero_init) {
        const int fan_in = l.in * l.kernel * l.kernel;
        Tensor w({l.out, l.in, l.kernel, l.kernel});
        if (!zero_init) {
            CounterRng rng(derive_key(seed_, params_.size()));
            const double bound = l.activation ? std::sqrt(6.0 / fan_in) : std::sqrt(1.0 / fan_in);
            for (auto& v : w.values()) v = rng.uniform(-bound, bound);
        }
        l.weight = static_cast<int>(params_.size());
        params_.push_back({name + ".weight", std::move(w)});
        l.bias = static_cast<int>(params_.size());
        params_.push_back({name + ".bias", Tensor({l.out})});
        list.push_back(l);
    };

    const auto& ch = config_.channels;
    add_layer(body_, {1, ch[0], 3, 1}, "stem", false);
    for (std::size_t i = 1; i < ch.size(); ++i)
        add_layer(body_, {ch[i - 1], ch[i], 3, 2}, "down" + std::to_string(i), false);
    int width = ch.back();
    for (int i = 0; i < config_.trunk_convs; ++i)
        add_layer(body_, {width, width, 3, 1}, "trunk" + std::to_string(i + 1), false);
    int stage = static_cast<int>(ch.size()) - 2;
    for (int size = config_.bottom_size(), up = 1; size < config_.dense_size; size *= 2, ++up) {
        const int next = ch[static_cast<std::size_t>(std::max(stage, 0))];
        Layer l{width, next, 3, 1};
        l.upsample = true;
        add_layer(body_, l, "up" + std::to_string(up), false);
        width = next;
        --stage;
    }
    for (const auto& h : head_specs_) {
        Layer l{width, config_.joints * h.per_joint, config_.head_kernel, 1};
        l.activation = false;
        add_layer(heads_, l, "head." + h.name, h.zero_init);
    }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

Model::Output Model::forward(Tape& tape, const Tensor& batch, std::vector<Var>& param_vars, bool trainable) const {
    if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != config_.input_size ||
        batch.dim(3) != config_.input_size)
        throw ShapeError("model input must be N x 1 x " + std::to_string(config_.input_size) + " x " +
                         std::to_string(config_.input_size) + ", got " + shape_string(batch.shape()));
    param_vars.clear();
    for (const auto& p : params_) param_vars.push_back(tape.leaf(p.value, trainable));

    Var x = tape.constant(batch);
    for (const auto& l : body_) {
        if (l.upsample) x = upsample2x(x);
        x = conv2d(x, param_vars[static_cast<std::size_t>(l.weight)], param_vars[static_cast<std::size_t>(l.bias)],
                   l.stride, l.kernel / 2);
        if (l.activation) x = leaky_relu(x, 0.01);
    }
    Output out;
    out.batch = batch.dim(0);
    for (const auto& l : heads_)
        out.heads.push_back(conv2d(x, param_vars[static_cast<std::size_t>(l.weight)],
                                   param_vars[static_cast<std::size_t>(l.bias)], 1, l.kernel / 2));
    return out;
}

DenseRep Model::dense_rep(const Output& out, int n) const {
    const int d = config_.dense_size;
    const int plane = d * d;
    DenseRep rep(config_.rep, config_.joints, d);
    for (std::size_t h = 0; h < head_specs_.size(); ++h) {
        const HeadSpec& spec = head_specs_[h];
        const int base = dense_channel(config_.rep.tag, spec);
        if (base < 0) continue;
        const Tensor& t = out.heads[h].value();
        const int hc = config_.joints * spec.per_joint;
        for (int j = 0; j < config_.joints; ++j)
            for (int a = 0; a < spec.per_joint; ++a) {
                const double* src = t.data() + (static_cast<std::size_t>(n) * hc + j * spec.per_joint + a) * plane;
                std::copy(src, src + plane, &rep.grid[rep.index(j, base + a, 0)]);
            }
    }
    return rep;
}

std::vector<double> Model::weight_logits(const Output& out, int n) const {
    const int plane = config_.dense_size * config_.dense_size;
    for (std::size_t h = 0; h < head_specs_.size(); ++h) {
        if (!head_specs_[h].weight_logits) continue;
        const Tensor& t = out.heads[h].value();
        const double* src = t.data() + static_cast<std::size_t>(n) * config_.joints * plane;
        return {src, src + static_cast<std::size_t>(config_.joints) * plane};
    }
    return {};
}

Var awr_joints(const Model& model, const Model::Output& out, std::span<const DenseGrid> grids) {
    const ModelConfig& cfg = model.config();
    const int batch = out.batch;
    if (static_cast<int>(grids.size()) != batch) throw ShapeError("awr_joints: one dense grid per sample required");
    const double temperature = cfg.awr_temperature;
    const bool has_weight = cfg.rep.tag == RepTag::P;

    auto reps = std::make_shared<std::vector<DenseRep>>();
    auto fields = std::make_shared<std::vector<CandidateField>>();
    Tensor joints({batch, cfg.joints, 3});
    for (int n = 0; n < batch; ++n) {
        reps->push_back(model.dense_rep(out, n));
        const std::vector<double> wl = model.weight_logits(out, n);
        fields->push_back(recover_candidates(reps->back(), grids[static_cast<std::size_t>(n)],
                                             has_weight ? &wl : nullptr, AggregationMode::awr));
        const NormPose p = awr_aggregate(fields->back(), temperature);
        for (int j = 0; j < cfg.joints; ++j)
            for (int a = 0; a < 3; ++a) joints[(static_cast<std::size_t>(n) * cfg.joints + j) * 3 + a] = p[j][a];
    }

    std::vector<int> parents;
    for (const Var& h : out.heads) parents.push_back(h.id);
    const std::vector<HeadSpec> specs = head_layout(cfg.rep.tag);
    const RepTag tag = cfg.rep.tag;
    const int nj = cfg.joints;
    const int plane = cfg.dense_size * cfg.dense_size;

    return out.heads.front().tape->record(
        std::move(joints), parents,
        [reps, fields, parents, specs, tag, nj, plane, temperature, batch, has_weight](Tape& t, int self) {
            const Tensor& gy = t.grad(self);
            for (int n = 0; n < batch; ++n) {
                const std::span<const double> up(gy.data() + static_cast<std::size_t>(n) * nj * 3,
                                                 static_cast<std::size_t>(nj) * 3);
                const AwrCotangents cot = awr_gradients((*fields)[static_cast<std::size_t>(n)], up, temperature);
                std::vector<double> wcot;
                const DenseRep g =
                    recover_candidates_backward((*reps)[static_cast<std::size_t>(n)], cot, has_weight ? &wcot : nullptr);
                for (std::size_t h = 0; h < specs.size(); ++h) {
                    const int pid = parents[h];
                    if (!t.requires_grad(pid)) continue;
                    Tensor& gh = t.grad(pid);
                    const int hc = nj * specs[h].per_joint;
                    const int base = dense_channel(tag, specs[h]);
                    for (int j = 0; j < nj; ++j)
                        for (int a = 0; a < specs[h].per_joint; ++a) {
                            double* dst = gh.data() +
                                          (static_cast<std::size_t>(n) * hc + j * specs[h].per_joint + a) * plane;
                            const double* src = base < 0 ? &wcot[static_cast<std::size_t>(j) * plane]
                                                         : &g.grid[g.index(j, base + a, 0)];
                            for (int p = 0; p < plane; ++p) dst[p] += src[p];
                        }
                }
            }
        },
        "awr_joints");
}

HeadTargets head_targets(const ModelConfig& cfg, std::span<const DenseRep* const> reps,
                         std::span<const DenseGrid* const> grids) {
    if (reps.size() != grids.size()) throw ShapeError("head_targets: one grid per target required");
    const int batch = static_cast<int>(reps.size());
    const int d = cfg.dense_size;
    const int plane = d * d;
    HeadTargets out;
    for (const auto& spec : head_layout(cfg.rep.tag)) {
        const int hc = cfg.joints * spec.per_joint;
        Tensor target({batch, hc, d, d});
        Tensor weight({batch, hc, d, d}, spec.weight_logits ? 0.0 : 1.0);
        const int base = dense_channel(cfg.rep.tag, spec);
        for (int n = 0; n < batch; ++n) {
            const DenseRep& rep = *reps[static_cast<std::size_t>(n)];
            const DenseGrid& grid = *grids[static_cast<std::size_t>(n)];
            if (rep.joints != cfg.joints || rep.height != d) throw ShapeError("head_targets: target shape mismatch");
            for (int j = 0; j < cfg.joints; ++j)
                for (int a = 0; a < spec.per_joint; ++a) {
                    const std::size_t off = (static_cast<std::size_t>(n) * hc + j * spec.per_joint + a) * plane;
                    for (int p = 0; p < plane; ++p) {
                        if (base >= 0) target[off + p] = rep.at(j, base + a, p);
                        if (spec.probability) weight[off + p] = grid.mask[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
                    }
                }
        }
        out.targets.push_back(std::move(target));
        out.weights.push_back(std::move(weight));
    }
    return out;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

} // namespace awrkit::nn
