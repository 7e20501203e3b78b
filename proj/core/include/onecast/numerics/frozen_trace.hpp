#pragma once

#include <cstddef>
#include <vector>

#include "onecast/numerics/tape.hpp"

namespace onecast::numerics {

/// Makes stop-gradient and discrete choices replayable for gradient checking.
///
/// The first pass records every detached value and every discrete selection;
/// later passes replay them as constants. Around the recorded point, the
/// replayed function is smooth and its exact derivative equals the analytic
/// gradient of the recorded pass (including straight-through routing), so
/// central differences can verify it.
class FrozenTrace {
public:
    /// Call at the start of every forward pass.
    void begin_pass();
    bool replaying() const noexcept { return replaying_; }

    /// Stop-gradient; replays the recorded value.
    Var detach(Var x);
    /// Records `value` on the first pass; returns the recorded copy afterwards.
    Tensor constant(const Tensor& value);
    std::vector<int> choice(const std::vector<int>& computed);

private:
    bool recorded_ = false;
    bool replaying_ = false;
    std::size_t tensor_cursor_ = 0;
    std::size_t choice_cursor_ = 0;
    std::vector<Tensor> tensors_;
    std::vector<std::vector<int>> choices_;
};

}  // namespace onecast::numerics
