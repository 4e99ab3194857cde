#include "awrkit/nn/adam.hpp"

#include <cmath>

#include "awrkit/error.hpp"

namespace awrkit::nn {

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& config) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.push_back(Tensor::zeros_like(p));
            state.second_moment.push_back(Tensor::zeros_like(p));
        }
    }
    if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& theta = params[k];
        const Tensor& g = grads[k];
        if (!theta.same_shape(g)) throw ShapeError("adam_step: gradient shape " + shape_string(g.shape()) +
                                                   " differs from parameter " + shape_string(theta.shape()));
        Tensor& m = state.first_moment[k];
        Tensor& v = state.second_moment[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g[i] + config.weight_decay * theta[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

} // namespace awrkit::nn
