#pragma once

#include "awrkit/nn/tape.hpp"

namespace awrkit::nn {

/// Cross-correlation over an N x C x H x W batch with a Co x C x K x K kernel
/// and Co bias. Output extent floor((H + 2 pad - K) / stride) + 1.
Var conv2d(Var input, Var kernel, Var bias, int stride = 1, int padding = 0);

/// Nearest-neighbor 2x upsampling of the last two axes.
Var upsample2x(Var input);

/// max(x, slope * x).
Var leaky_relu(Var x, double slope = 0.0);
inline Var relu(Var x) { return leaky_relu(x, 0.0); }

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);

/// Mean Huber-style loss: 0.5 x^2 / delta for |x| < delta, else |x| - 0.5 delta.
/// With `weights`, the mean is sum(w * l) / sum(w).
Var smooth_l1(Var pred, const Tensor& target, double delta = 1.0, const Tensor* weights = nullptr);

/// Mean squared difference, weighted as smooth_l1.
Var l2_loss(Var pred, const Tensor& target, const Tensor* weights = nullptr);

} // namespace awrkit::nn
