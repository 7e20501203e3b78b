#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "onecast/numerics/parameter.hpp"
#include "onecast/numerics/tensor.hpp"

namespace onecast::numerics {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t index = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode recording of one forward pass. Each node keeps its value, an
/// optional backward rule, and a lazily allocated gradient buffer. Nodes whose
/// inputs carry no gradient never store a backward rule.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Borrowed constant; `value` must outlive the tape.
    Var constant_ref(const Tensor& value);
    /// Trainable leaf. Gradients land in `p.grad` after backward(). Binding the
    /// same parameter twice returns the same node.
    Var parameter(Parameter& p);

    Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
    Var record(Tensor value, const std::vector<Var>& parents, Backward backward);

    const Tensor& value(std::size_t i) const;
    bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
    bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }

    /// Gradient buffer of node i, or nullptr when the node carries no gradient.
    Tensor* grad_slot(std::size_t i);
    const Tensor* grad(Var v) const;

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates. Parameter
    /// gradients accumulate (+=) into Parameter::grad.
    void backward(Var root);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Parameter* param = nullptr;
        Backward backward;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(index); }

}  // namespace onecast::numerics
