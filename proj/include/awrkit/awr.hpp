#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "awrkit/rep.hpp"

namespace awrkit {

/// How candidate pixels are selected.
///   awr       - every hand pixel is a candidate; the softmax learns the support.
///   detection - offset types additionally require positive closeness.
enum class AggregationMode { awr, detection };

/// Per-pixel joint hypotheses j(p_ij) with their weight logits, for all joints.
/// Hypotheses are laid out J x n x 3, logits and validity J x n.
struct CandidateField {
    int joints = 0;
    int pixels = 0;
    std::vector<double> hypotheses;
    std::vector<double> logits;
    std::vector<std::uint8_t> valid;

    CandidateField() = default;
    CandidateField(int j, int n)
        : joints(j), pixels(n), hypotheses(static_cast<std::size_t>(j) * n * 3, 0.0),
          logits(static_cast<std::size_t>(j) * n, 0.0), valid(static_cast<std::size_t>(j) * n, 0) {}

    double* hypothesis(int j, int i) { return &hypotheses[(static_cast<std::size_t>(j) * pixels + i) * 3]; }
    const double* hypothesis(int j, int i) const { return &hypotheses[(static_cast<std::size_t>(j) * pixels + i) * 3]; }

    void check_shape() const;
};

struct AwrOptions {
    double temperature = 1.0;
    // Softmax over every grid pixel instead of hand pixels only.
    bool span_all = false;
};

/// Recovers per-pixel hypotheses from dense maps:
///   P     j = (Px, Py, Pz)                              logits = weight head
///   H1    j = (u_i, v_i, D_i)                           logits = probability
///   H2    j = (u_i, v_i, z_i + dz_i)                    logits = probability
///   O1/O2 plane = (u_i, v_i) - k (1 - S_i) V_i, depth as H1/H2, logits = S_i
///   O3    j = p_i - k (1 - S_i) V_i                     logits = S_i
/// `weight_logits` (J x n) feeds P; when null, P logits are zero.
CandidateField recover_candidates(const DenseRep& predicted, const DenseGrid& grid,
                                  const std::vector<double>* weight_logits, AggregationMode mode,
                                  bool span_all = false);

/// Masked softmax per joint over J x n logits. Invalid pixels get exactly 0.
/// Throws UndecodableJointError when a joint has no valid pixel.
std::vector<double> softmax_weights(std::span<const double> logits, std::span<const std::uint8_t> valid, int joints,
                                    double temperature = 1.0);

/// sum_i w_ij * j(p_ij) for every joint.
NormPose weighted_sum(const CandidateField& field, std::span<const double> weights);

/// Softmax-weighted discrete integration of the candidate field.
NormPose awr_aggregate(const CandidateField& field, double temperature = 1.0);

struct AwrCotangents {
    std::vector<double> hypotheses; // J x n x 3
    std::vector<double> logits;     // J x n
};

/// Reverse-mode derivative of awr_aggregate given J x 3 upstream cotangents:
/// d p_j / d j(p_ij) = w_i I, d p_j / d logit_i = w_i (j(p_ij) - p_j) / T.
AwrCotangents awr_gradients(const CandidateField& field, std::span<const double> upstream, double temperature = 1.0);

/// Maps candidate-field cotangents back onto the dense channels (and onto the
/// P weight head when `weight_cotangent` is given). Inverse of the chain rule
/// through recover_candidates.
DenseRep recover_candidates_backward(const DenseRep& predicted, const AwrCotangents& cot,
                                     std::vector<double>* weight_cotangent = nullptr);

/// Full AWR decode: recover (awr mode), softmax, aggregate.
NormPose awr_decode(const DenseRep& predicted, const DenseGrid& grid, const std::vector<double>* weight_logits,
                    const AwrOptions& options = {});

/// Non-learned baseline decode:
///   H1/H2 argmax of the probability channel over hand pixels (lowest row-major
///         index wins ties), depth read at that pixel;
///   O*    linear-normalized closeness over S > 0 hand pixels;
///   P     plain mean over hand pixels.
/// With `mean_fallback`, an O* joint with empty S > 0 support takes the plain
/// mean of its hypotheses over hand pixels instead of raising; the number of
/// such joints is added to `*fallback_joints` when given.
struct DetectionOptions {
    bool mean_fallback = false;
};
NormPose detection_decode(const DenseRep& predicted, const DenseGrid& grid, const DetectionOptions& options = {},
                          int* fallback_joints = nullptr);

} // namespace awrkit
