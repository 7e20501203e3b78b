#include "onecast/numerics/tape.hpp"

#include "onecast/error.hpp"

namespace onecast::numerics {

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
    Node n;
    n.borrowed = &value;
    return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
    Node n;
    n.borrowed = &p.value;
    n.requires_grad = true;
    n.param = &p;
    Var v = push(std::move(n));
    param_nodes_.emplace(&p, v.index);
    return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, Backward backward) {
    Node n;
    n.owned = std::move(value);
    for (const Var& p : parents) {
        if (p.tape != this) throw ConfigError("variable recorded on a different tape");
        n.requires_grad = n.requires_grad || nodes_[p.index].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Tensor& Tape::value(std::size_t i) const {
    const Node& n = nodes_[i];
    return n.borrowed ? *n.borrowed : n.owned;
}

Tensor* Tape::grad_slot(std::size_t i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
        n.grad = Tensor(value(i).shape());
        n.has_grad = true;
    }
    return &n.grad;
}

const Tensor* Tape::grad(Var v) const {
    const Node& n = nodes_[v.index];
    return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw ConfigError("backward root recorded on a different tape");
    if (value(root.index).size() != 1) {
        throw DimensionError("backward needs a scalar root, got " + shape_string(value(root.index).shape()));
    }
    Tensor* seed = grad_slot(root.index);
    if (!seed) return;
    seed->fill(1.0);
    for (std::size_t i = root.index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) n.param->grad.add_inplace(n.grad);
    }
}

}  // namespace onecast::numerics
