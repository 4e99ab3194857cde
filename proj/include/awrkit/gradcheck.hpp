#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace awrkit {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    int trials = 100;
    double step = 1e-6;
    double tolerance = 1e-4;
    // Test fixture: negate the analytic gradient of the named op.
    std::string sabotage;
};

struct OpCheck {
    std::string op;
    int trials = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Names of every checked op, in report order.
const std::vector<std::string>& gradcheck_ops();

/// Central finite differences against the reverse-mode gradients of every
/// differentiable primitive, awr_aggregate, and the AWR head op for each
/// representation. The error per trial is ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over a random projection of the output.
std::vector<OpCheck> run_gradcheck(const GradcheckOptions& options);

} // namespace awrkit
