#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "awrkit/geometry.hpp"

namespace awrkit {

struct CurvePoint {
    double threshold_mm = 0.0;
    double fraction = 0.0;
};

struct JointErrors {
    std::vector<double> per_joint_mean_mm;
    double all_joint_mean_mm = 0.0;
};

/// Per-joint mean Euclidean error over frames and the mean over all joints and
/// frames. Throws ShapeError on mismatched sets and UsageError on an empty one.
JointErrors mean_joint_error(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts);

/// Fraction of frames whose worst joint error is <= each threshold.
/// Thresholds must be non-empty and ascending.
std::vector<CurvePoint> good_frame_curve(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts,
                                         const std::vector<double>& thresholds);

/// 0, 2, ..., 80 mm.
std::vector<double> default_thresholds();

/// Metrics restricted to one visibility class. Joints with no member in the
/// class report NaN; the curve counts only frames with at least one member.
struct Stratum {
    std::vector<double> per_joint_mean_mm;
    double all_joint_mean_mm = 0.0;
    std::size_t joint_count = 0;
    std::size_t frame_count = 0;
    std::vector<CurvePoint> good_frame_curve;
};

struct EvalResult {
    std::vector<double> per_joint_mean_mm;
    double all_joint_mean_mm = 0.0;
    std::vector<CurvePoint> good_frame_curve;
    std::size_t n_frames = 0;
    bool has_strata = false;
    Stratum visible;
    Stratum occluded;
};

/// `visibility` (frames x J, nonzero = visible) may be empty to skip stratification.
EvalResult evaluate(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts,
                    const std::vector<std::vector<std::uint8_t>>& visibility = {},
                    const std::vector<double>& thresholds = default_thresholds());

std::string eval_result_json(const EvalResult& r);
/// threshold_mm,fraction rows.
std::string curve_csv(const std::vector<CurvePoint>& curve);

struct Report {
    std::string table; // run,all_joint_mean_mm
    std::string curves_csv; // threshold_mm followed by one column per run
    std::string json;
};

/// Runs are ordered by name. Throws UsageError on duplicates or an empty list.
Report compare_report(std::vector<std::pair<std::string, EvalResult>> runs);

} // namespace awrkit
