#pragma once

#include <functional>
#include <vector>

#include "awrkit/nn/tensor.hpp"

namespace awrkit::nn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode record. Nodes are appended after their parents, so walking
/// the node list backwards is a valid reverse topological order.
class Tape {
public:
    using Backward = std::function<void(Tape&, int self)>;

    /// In checked mode every recorded value is tested for NaN/Inf.
    explicit Tape(bool checked = true) : checked_(checked) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Records an op result. `backward` reads grad(self) and accumulates into
    /// its parents; it is skipped when no parent requires a gradient.
    Var record(Tensor value, std::vector<int> parents, Backward backward, const char* op = "op");

    /// Seeds d(root)/d(root) = 1 for a scalar root and sweeps in reverse.
    void backward(Var root);

    const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

    /// Gradient buffer of a node, allocated (zeroed) on first access.
    Tensor& grad(int id);
    const Tensor& grad(int id) const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::vector<int> parents;
        Backward backward;
    };

    std::vector<Node> nodes_;
    bool checked_;
};

} // namespace awrkit::nn
