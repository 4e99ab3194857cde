#include "awrkit/nn/tape.hpp"

#include "awrkit/error.hpp"

namespace awrkit::nn {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (checked_) value.check_finite("leaf");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> parents, Backward backward, const char* op) {
    if (checked_) value.check_finite(op);
    Node node;
    node.value = std::move(value);
    for (int p : parents) node.requires_grad = node.requires_grad || requires_grad(p);
    node.parents = std::move(parents);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
}

const Tensor& Tape::grad(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.grad.size() != n.value.size())
        throw ShapeError("gradient requested for a node the reverse sweep never reached");
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw ShapeError("backward: variable belongs to another tape");
    if (value(root.id).size() != 1) throw ShapeError("backward: root must be a scalar");
    // Gradients of constants are allocated lazily, only if an op touches them.
    for (auto& n : nodes_) n.grad = n.requires_grad ? Tensor::zeros_like(n.value) : Tensor();
    nodes_[static_cast<std::size_t>(root.id)].grad[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.backward) n.backward(*this, id);
    }
}

} // namespace awrkit::nn
