#include "onecast/numerics/frozen_trace.hpp"

#include "onecast/error.hpp"
#include "onecast/numerics/ops.hpp"

namespace onecast::numerics {

void FrozenTrace::begin_pass() {
    if (recorded_) replaying_ = true;
    recorded_ = true;
    tensor_cursor_ = 0;
    choice_cursor_ = 0;
}

Tensor FrozenTrace::constant(const Tensor& value) {
    if (!replaying_) {
        tensors_.push_back(value);
        ++tensor_cursor_;
        return value;
    }
    if (tensor_cursor_ >= tensors_.size()) throw ConfigError("FrozenTrace: replay diverged from recording");
    const Tensor& saved = tensors_[tensor_cursor_++];
    if (!saved.same_shape(value)) throw ConfigError("FrozenTrace: replayed shape changed");
    return saved;
}

Var FrozenTrace::detach(Var x) {
    if (!replaying_) {
        tensors_.push_back(x.value());
        ++tensor_cursor_;
        return stop_gradient(x);
    }
    return x.tape->constant(constant(x.value()));
}

std::vector<int> FrozenTrace::choice(const std::vector<int>& computed) {
    if (!replaying_) {
        choices_.push_back(computed);
        ++choice_cursor_;
        return computed;
    }
    if (choice_cursor_ >= choices_.size()) throw ConfigError("FrozenTrace: replay diverged from recording");
    return choices_[choice_cursor_++];
}

}  // namespace onecast::numerics
