#include "awrkit/awr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "awrkit/error.hpp"

namespace awrkit {

namespace {

using RowMat3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

void check_grid_match(const DenseRep& rep, const DenseGrid& grid) {
    if (rep.height != grid.size || rep.width != grid.size || grid.points.size() != static_cast<std::size_t>(rep.pixels()))
        throw ShapeError("dense rep and dense grid sizes differ");
}

} // namespace

void CandidateField::check_shape() const {
    const auto jn = static_cast<std::size_t>(joints) * pixels;
    if (joints <= 0 || pixels <= 0 || hypotheses.size() != jn * 3 || logits.size() != jn || valid.size() != jn)
        throw ShapeError("candidate field buffers do not match its shape");
}

CandidateField recover_candidates(const DenseRep& rep, const DenseGrid& grid, const std::vector<double>* weight_logits,
                                  AggregationMode mode, bool span_all) {
    rep.check_shape();
    check_grid_match(rep, grid);
    const int n = rep.pixels();
    const double k = rep.rep_type.kernel_k;
    const RepTag tag = rep.rep_type.tag;
    if (weight_logits && weight_logits->size() != static_cast<std::size_t>(rep.joints) * n)
        throw ShapeError("weight logits must be J x H x W");

    CandidateField f(rep.joints, n);
    for (int j = 0; j < rep.joints; ++j) {
        for (int i = 0; i < n; ++i) {
            const Vec3& p = grid.points[i];
            double* h = f.hypothesis(j, i);
            double logit = 0.0;
            switch (tag) {
            case RepTag::P:
                h[0] = rep.at(j, chan::pose_x, i);
                h[1] = rep.at(j, chan::pose_y, i);
                h[2] = rep.at(j, chan::pose_z, i);
                logit = weight_logits ? (*weight_logits)[static_cast<std::size_t>(j) * n + i] : 0.0;
                break;
            case RepTag::H1:
            case RepTag::H2:
                h[0] = p.x();
                h[1] = p.y();
                h[2] = tag == RepTag::H1 ? rep.at(j, chan::heat_depth, i) : p.z() + rep.at(j, chan::heat_depth, i);
                logit = rep.at(j, chan::prob, i);
                break;
            case RepTag::O1:
            case RepTag::O2: {
                const double s = rep.at(j, chan::close2, i);
                const double reach = k * (1.0 - s);
                h[0] = p.x() - reach * rep.at(j, chan::unit2_x, i);
                h[1] = p.y() - reach * rep.at(j, chan::unit2_y, i);
                h[2] = tag == RepTag::O1 ? rep.at(j, chan::plane_depth, i) : p.z() + rep.at(j, chan::plane_depth, i);
                logit = s;
                break;
            }
            case RepTag::O3: {
                const double s = rep.at(j, chan::close3, i);
                const double reach = k * (1.0 - s);
                for (int a = 0; a < 3; ++a) h[a] = p[a] - reach * rep.at(j, chan::unit3_x + a, i);
                logit = s;
                break;
            }
            }
            const auto idx = static_cast<std::size_t>(j) * n + i;
            f.logits[idx] = logit;
            bool ok = span_all || grid.mask[i] != 0;
            if (mode == AggregationMode::detection && rep.rep_type.is_offset()) ok = ok && logit > 0.0;
            f.valid[idx] = ok ? 1 : 0;
        }
    }
    return f;
}

std::vector<double> softmax_weights(std::span<const double> logits, std::span<const std::uint8_t> valid, int joints,
                                    double temperature) {
    if (joints <= 0 || logits.size() != valid.size() || logits.size() % joints != 0)
        throw ShapeError("softmax_weights: logits and mask must be J x n");
    if (!(temperature > 0.0)) throw UsageError("softmax_weights: temperature must be positive");
    const std::size_t n = logits.size() / joints;
    std::vector<double> w(logits.size(), 0.0);
    for (int j = 0; j < joints; ++j) {
        const std::size_t base = j * n;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (valid[base + i]) top = std::max(top, logits[base + i] / temperature);
        if (top == -std::numeric_limits<double>::infinity())
            throw UndecodableJointError(j, "softmax_weights: no valid pixel");
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid[base + i]) continue;
            w[base + i] = std::exp(logits[base + i] / temperature - top);
            total += w[base + i];
        }
        for (std::size_t i = 0; i < n; ++i) w[base + i] /= total;
    }
    return w;
}

NormPose weighted_sum(const CandidateField& field, std::span<const double> weights) {
    field.check_shape();
    if (weights.size() != field.logits.size()) throw ShapeError("weighted_sum: weights must be J x n");
    const int n = field.pixels;
    NormPose out(field.joints);
    for (int j = 0; j < field.joints; ++j) {
        const Eigen::Map<const RowMat3> hyp(field.hypothesis(j, 0), n, 3);
        const Eigen::Map<const Eigen::RowVectorXd> w(weights.data() + static_cast<std::size_t>(j) * n, n);
        out[j] = (w * hyp).transpose();
    }
    return out;
}

NormPose awr_aggregate(const CandidateField& field, double temperature) {
    field.check_shape();
    return weighted_sum(field, softmax_weights(field.logits, field.valid, field.joints, temperature));
}

AwrCotangents awr_gradients(const CandidateField& field, std::span<const double> upstream, double temperature) {
    field.check_shape();
    if (upstream.size() != static_cast<std::size_t>(field.joints) * 3)
        throw ShapeError("awr_gradients: upstream must be J x 3");
    const std::vector<double> w = softmax_weights(field.logits, field.valid, field.joints, temperature);
    const NormPose out = weighted_sum(field, w);
    const int n = field.pixels;

    AwrCotangents cot;
    cot.hypotheses.assign(field.hypotheses.size(), 0.0);
    cot.logits.assign(field.logits.size(), 0.0);
    for (int j = 0; j < field.joints; ++j) {
        const double* g = &upstream[static_cast<std::size_t>(j) * 3];
        for (int i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(j) * n + i;
            if (!field.valid[idx]) continue;
            const double* h = field.hypothesis(j, i);
            double dot = 0.0;
            for (int a = 0; a < 3; ++a) {
                cot.hypotheses[idx * 3 + a] = w[idx] * g[a];
                dot += (h[a] - out[j][a]) * g[a];
            }
            cot.logits[idx] = w[idx] * dot / temperature;
        }
    }
    return cot;
}

DenseRep recover_candidates_backward(const DenseRep& rep, const AwrCotangents& cot,
                                     std::vector<double>* weight_cotangent) {
    rep.check_shape();
    const int n = rep.pixels();
    const auto jn = static_cast<std::size_t>(rep.joints) * n;
    if (cot.hypotheses.size() != jn * 3 || cot.logits.size() != jn)
        throw ShapeError("recover_candidates_backward: cotangent shape mismatch");
    const double k = rep.rep_type.kernel_k;

    DenseRep grad(rep.rep_type, rep.joints, rep.height);
    if (weight_cotangent) weight_cotangent->assign(jn, 0.0);
    for (int j = 0; j < rep.joints; ++j) {
        for (int i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(j) * n + i;
            const double* gh = &cot.hypotheses[idx * 3];
            const double gl = cot.logits[idx];
            switch (rep.rep_type.tag) {
            case RepTag::P:
                for (int a = 0; a < 3; ++a) grad.at(j, chan::pose_x + a, i) = gh[a];
                if (weight_cotangent) (*weight_cotangent)[idx] = gl;
                break;
            case RepTag::H1:
            case RepTag::H2:
                grad.at(j, chan::heat_depth, i) = gh[2];
                grad.at(j, chan::prob, i) = gl;
                break;
            case RepTag::O1:
            case RepTag::O2: {
                const double s = rep.at(j, chan::close2, i);
                const double reach = k * (1.0 - s);
                double gs = gl;
                for (int a = 0; a < 2; ++a) {
                    grad.at(j, chan::unit2_x + a, i) = -reach * gh[a];
                    gs += k * rep.at(j, chan::unit2_x + a, i) * gh[a];
                }
                grad.at(j, chan::close2, i) = gs;
                grad.at(j, chan::plane_depth, i) = gh[2];
                break;
            }
            case RepTag::O3: {
                const double s = rep.at(j, chan::close3, i);
                const double reach = k * (1.0 - s);
                double gs = gl;
                for (int a = 0; a < 3; ++a) {
                    grad.at(j, chan::unit3_x + a, i) = -reach * gh[a];
                    gs += k * rep.at(j, chan::unit3_x + a, i) * gh[a];
                }
                grad.at(j, chan::close3, i) = gs;
                break;
            }
            }
        }
    }
    return grad;
}

NormPose awr_decode(const DenseRep& predicted, const DenseGrid& grid, const std::vector<double>* weight_logits,
                    const AwrOptions& options) {
    const CandidateField f = recover_candidates(predicted, grid, weight_logits, AggregationMode::awr, options.span_all);
    return awr_aggregate(f, options.temperature);
}

NormPose detection_decode(const DenseRep& rep, const DenseGrid& grid, const DetectionOptions& options,
                          int* fallback_joints) {
    const CandidateField f = recover_candidates(rep, grid, nullptr, AggregationMode::detection);
    const int n = f.pixels;
    NormPose out(f.joints, Vec3::Zero());
    for (int j = 0; j < f.joints; ++j) {
        const auto base = static_cast<std::size_t>(j) * n;
        if (rep.rep_type.is_heatmap()) {
            int best = -1;
            for (int i = 0; i < n; ++i)
                if (f.valid[base + i] && (best < 0 || f.logits[base + i] > f.logits[base + best])) best = i;
            if (best < 0) throw UndecodableJointError(j, "detection_decode: no hand pixel");
            const double* h = f.hypothesis(j, best);
            out[j] = Vec3(h[0], h[1], h[2]);
            continue;
        }
        double total = 0.0;
        Vec3 acc = Vec3::Zero();
        for (int i = 0; i < n; ++i) {
            if (!f.valid[base + i]) continue;
            const double w = rep.rep_type.tag == RepTag::P ? 1.0 : f.logits[base + i];
            const double* h = f.hypothesis(j, i);
            acc += w * Vec3(h[0], h[1], h[2]);
            total += w;
        }
        if (!(total > 0.0) && options.mean_fallback) {
            acc = Vec3::Zero();
            for (int i = 0; i < n; ++i) {
                if (!grid.mask[i]) continue;
                const double* h = f.hypothesis(j, i);
                acc += Vec3(h[0], h[1], h[2]);
                total += 1.0;
            }
            if (total > 0.0 && fallback_joints) ++*fallback_joints;
        }
        if (!(total > 0.0)) throw UndecodableJointError(j, "detection_decode: empty support");
        out[j] = acc / total;
    }
    return out;
}

} // namespace awrkit
