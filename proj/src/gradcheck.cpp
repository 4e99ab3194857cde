#include "awrkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "awrkit/awr.hpp"
#include "awrkit/error.hpp"
#include "awrkit/nn/model.hpp"
#include "awrkit/nn/ops.hpp"
#include "awrkit/random.hpp"

namespace awrkit {

namespace {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Per-input cap on finite-difference probes; larger inputs are subsampled.
constexpr int kMaxProbes = 48;

Tensor random_tensor(CounterRng& rng, nn::Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Keeps values at least `gap` away from `kink` so a central difference never straddles it.
void avoid(Tensor& t, double kink, double gap) {
    for (double& v : t.values())
        if (std::abs(v - kink) < gap) v = kink + (v < kink ? -gap : gap);
}

double norm_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale > 0.0 ? std::sqrt(diff) / scale : 0.0;
}

struct Checker {
    CounterRng& rng;
    double step;
    bool flip;

    double run(std::vector<Tensor> inputs, const std::vector<bool>& differentiable, const Builder& f) {
        Tensor projection;
        auto scalar = [&](Tape& tape, const std::vector<Tensor>& in, bool grads, std::vector<Var>* leaves) {
            std::vector<Var> vars;
            for (std::size_t i = 0; i < in.size(); ++i) vars.push_back(tape.leaf(in[i], grads && differentiable[i]));
            Var out = f(tape, vars);
            if (projection.empty()) projection = random_tensor(rng, out.shape());
            Var s = nn::sum(nn::mul(out, tape.constant(projection)));
            if (leaves) *leaves = vars;
            return s;
        };

        Tape tape(false);
        std::vector<Var> leaves;
        Var s = scalar(tape, inputs, true, &leaves);
        tape.backward(s);

        std::vector<double> analytic, numeric;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (!differentiable[i]) continue;
            const Tensor& g = leaves[i].grad();
            const std::size_t n = inputs[i].size();
            std::vector<std::size_t> probe;
            if (n <= kMaxProbes) {
                for (std::size_t e = 0; e < n; ++e) probe.push_back(e);
            } else {
                for (int p = 0; p < kMaxProbes; ++p) probe.push_back(rng.below(n));
            }
            for (std::size_t e : probe) {
                const double orig = inputs[i][e];
                inputs[i][e] = orig + step;
                Tape tp(false);
                const double fp = scalar(tp, inputs, false, nullptr).value()[0];
                inputs[i][e] = orig - step;
                Tape tm(false);
                const double fm = scalar(tm, inputs, false, nullptr).value()[0];
                inputs[i][e] = orig;
                numeric.push_back((fp - fm) / (2.0 * step));
                analytic.push_back(flip ? -g[e] : g[e]);
            }
        }
        return norm_rel(analytic, numeric);
    }
};

int dim(CounterRng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

DenseGrid random_grid(CounterRng& rng, int size) {
    DenseGrid g;
    g.size = size;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const bool hand = rng.uniform() < 0.7;
            g.mask.push_back(hand ? 1 : 0);
            g.points.emplace_back(CropTransform::cell_center(c, size), CropTransform::cell_center(r, size),
                                  hand ? rng.uniform(-0.5, 0.5) : kBackgroundDepth);
        }
    g.mask[rng.below(g.mask.size())] = 1; // at least one hand pixel
    return g;
}

double trial_awr_aggregate(Checker& ck, CounterRng& rng, const GradcheckOptions& opt) {
    const int joints = dim(rng, 1, 3);
    const int pixels = dim(rng, 1, 12);
    CandidateField field(joints, pixels);
    for (double& v : field.hypotheses) v = rng.uniform(-1.0, 1.0);
    for (double& v : field.logits) v = rng.uniform(-2.0, 2.0);
    for (auto& v : field.valid) v = rng.uniform() < 0.75 ? 1 : 0;
    for (int j = 0; j < joints; ++j) field.valid[static_cast<std::size_t>(j) * pixels + rng.below(pixels)] = 1;
    const double temperature = rng.uniform(0.25, 2.0);

    std::vector<double> up(static_cast<std::size_t>(joints) * 3);
    for (double& v : up) v = rng.uniform(-1.0, 1.0);
    auto value = [&](const CandidateField& f) {
        const NormPose p = awr_aggregate(f, temperature);
        double s = 0.0;
        for (int j = 0; j < joints; ++j)
            for (int a = 0; a < 3; ++a) s += up[static_cast<std::size_t>(j) * 3 + a] * p[j][a];
        return s;
    };
    const AwrCotangents cot = awr_gradients(field, up, temperature);
    std::vector<double> analytic, numeric;
    auto probe = [&](std::vector<double>& buf, const std::vector<double>& grad, std::size_t e) {
        const double orig = buf[e];
        buf[e] = orig + opt.step;
        const double fp = value(field);
        buf[e] = orig - opt.step;
        const double fm = value(field);
        buf[e] = orig;
        numeric.push_back((fp - fm) / (2.0 * opt.step));
        analytic.push_back(ck.flip ? -grad[e] : grad[e]);
    };
    for (std::size_t e = 0; e < field.hypotheses.size(); ++e) probe(field.hypotheses, cot.hypotheses, e);
    for (std::size_t e = 0; e < field.logits.size(); ++e)
        if (field.valid[e]) probe(field.logits, cot.logits, e);
    return norm_rel(analytic, numeric);
}

double trial_awr_head(Checker& ck, CounterRng& rng, RepTag tag) {
    nn::ModelConfig cfg;
    cfg.input_size = 8;
    cfg.dense_size = dim(rng, 0, 1) ? 4 : 2;
    cfg.channels = {1, 1, 1};
    cfg.joints = dim(rng, 1, 3);
    cfg.rep.tag = tag;
    cfg.rep.kernel_k = rng.uniform(0.5, 2.0);
    cfg.awr_temperature = rng.uniform(0.25, 1.0);
    const nn::Model model(cfg, rng.next_u64());
    const int batch = dim(rng, 1, 2);
    std::vector<DenseGrid> grids;
    for (int n = 0; n < batch; ++n) grids.push_back(random_grid(rng, cfg.dense_size));

    std::vector<Tensor> inputs;
    for (const auto& h : nn::head_layout(tag)) {
        Tensor t = random_tensor(rng, {batch, cfg.joints * h.per_joint, cfg.dense_size, cfg.dense_size});
        if (h.name == "closeness") avoid(t, 0.0, 1e-3);
        inputs.push_back(std::move(t));
    }
    const std::vector<bool> diff(inputs.size(), true);
    return ck.run(inputs, diff, [&](Tape&, const std::vector<Var>& v) {
        nn::Model::Output out;
        out.heads = v;
        out.batch = batch;
        return nn::awr_joints(model, out, grids);
    });
}

double run_trial(const std::string& op, Checker& ck, CounterRng& rng, const GradcheckOptions& opt) {
    if (op == "conv2d") {
        const int k = dim(rng, 1, 3);
        const int pad = dim(rng, 0, k / 2 + 1);
        const int stride = dim(rng, 1, 2);
        const int h = std::max(dim(rng, 1, 6), k - 2 * pad);
        const int w = std::max(dim(rng, 1, 6), k - 2 * pad);
        const int c = dim(rng, 1, 3), co = dim(rng, 1, 3), n = dim(rng, 1, 2);
        return ck.run({random_tensor(rng, {n, c, h, w}), random_tensor(rng, {co, c, k, k}), random_tensor(rng, {co})},
                      {true, true, true},
                      [=](Tape&, const std::vector<Var>& v) { return nn::conv2d(v[0], v[1], v[2], stride, pad); });
    }
    if (op == "upsample2x")
        return ck.run({random_tensor(rng, {dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 4)})}, {true},
                      [](Tape&, const std::vector<Var>& v) { return nn::upsample2x(v[0]); });
    if (op == "leaky_relu") {
        Tensor x = random_tensor(rng, {dim(rng, 1, 4), dim(rng, 1, 5)});
        avoid(x, 0.0, 1e-3);
        const double slope = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 0.3);
        return ck.run({x}, {true}, [=](Tape&, const std::vector<Var>& v) { return nn::leaky_relu(v[0], slope); });
    }
    if (op == "add" || op == "mul") {
        const nn::Shape s{dim(rng, 1, 3), dim(rng, 1, 4)};
        const bool is_add = op == "add";
        return ck.run({random_tensor(rng, s), random_tensor(rng, s)}, {true, true},
                      [=](Tape&, const std::vector<Var>& v) { return is_add ? nn::add(v[0], v[1]) : nn::mul(v[0], v[1]); });
    }
    if (op == "shared_subexpression") {
        // y = x * x + scale(x): three paths into the same leaf.
        return ck.run({random_tensor(rng, {dim(rng, 1, 5)})}, {true}, [](Tape&, const std::vector<Var>& v) {
            return nn::add(nn::mul(v[0], v[0]), nn::scale(v[0], -1.5));
        });
    }
    if (op == "scale") {
        const double f = rng.uniform(-3.0, 3.0);
        return ck.run({random_tensor(rng, {dim(rng, 1, 3), dim(rng, 1, 3)})}, {true},
                      [=](Tape&, const std::vector<Var>& v) { return nn::scale(v[0], f); });
    }
    if (op == "sum")
        return ck.run({random_tensor(rng, {dim(rng, 1, 4), dim(rng, 1, 4)})}, {true},
                      [](Tape&, const std::vector<Var>& v) { return nn::sum(v[0]); });
    if (op == "smooth_l1" || op == "l2_loss") {
        const nn::Shape s{dim(rng, 1, 3), dim(rng, 1, 5)};
        const double delta = rng.uniform(0.2, 1.5);
        Tensor pred = random_tensor(rng, s, -2.0, 2.0);
        const Tensor target = random_tensor(rng, s);
        // Keep |pred - target| clear of the branch point.
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double x = pred[i] - target[i];
            if (std::abs(std::abs(x) - delta) < 1e-3) pred[i] += 2e-3;
        }
        const bool weighted = rng.uniform() < 0.5;
        Tensor weights = random_tensor(rng, s, 0.1, 1.0);
        const bool smooth = op == "smooth_l1";
        return ck.run({pred}, {true}, [=](Tape&, const std::vector<Var>& v) {
            const Tensor* w = weighted ? &weights : nullptr;
            return smooth ? nn::smooth_l1(v[0], target, delta, w) : nn::l2_loss(v[0], target, w);
        });
    }
    if (op == "awr_aggregate") return trial_awr_aggregate(ck, rng, opt);
    for (RepTag tag : {RepTag::P, RepTag::H1, RepTag::H2, RepTag::O1, RepTag::O2, RepTag::O3})
        if (op == "awr_head_" + std::string(to_string(tag))) return trial_awr_head(ck, rng, tag);
    throw UsageError("gradcheck: unknown op '" + op + "'");
}

} // namespace

const std::vector<std::string>& gradcheck_ops() {
    static const std::vector<std::string> ops = {
        "conv2d",      "upsample2x",  "leaky_relu",  "add",         "mul",         "scale",
        "sum",         "shared_subexpression",       "smooth_l1",   "l2_loss",     "awr_aggregate",
        "awr_head_P",  "awr_head_H1", "awr_head_H2", "awr_head_O1", "awr_head_O2", "awr_head_O3"};
    return ops;
}

std::vector<OpCheck> run_gradcheck(const GradcheckOptions& options) {
    if (options.trials < 1) throw UsageError("gradcheck: trials must be positive");
    if (!options.sabotage.empty() &&
        std::find(gradcheck_ops().begin(), gradcheck_ops().end(), options.sabotage) == gradcheck_ops().end())
        throw UsageError("gradcheck: unknown op '" + options.sabotage + "'");
    std::vector<OpCheck> report;
    std::uint64_t op_index = 0;
    for (const auto& op : gradcheck_ops()) {
        CounterRng rng(derive_key(options.seed, op_index++));
        Checker ck{rng, options.step, op == options.sabotage};
        OpCheck rec;
        rec.op = op;
        for (int t = 0; t < options.trials; ++t) {
            const double err = run_trial(op, ck, rng, options);
            rec.max_rel_error = std::max(rec.max_rel_error, std::isfinite(err) ? err : INFINITY);
            ++rec.trials;
        }
        rec.passed = rec.max_rel_error < options.tolerance;
        report.push_back(rec);
    }
    return report;
}

} // namespace awrkit
