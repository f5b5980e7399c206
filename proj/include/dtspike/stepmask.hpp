#pragma once

#include <vector>

#include "dtspike/tensor.hpp"

namespace dts {

// scores[t] = sum_{i >= t} params[i]; throws if any param entry is negative
Tensor step_scores(const Tensor& params);

// binary mask, 1 where score >= 1; requires a non-increasing score input
Tensor step_mask_of(const Tensor& scores);

// number of active steps; throws on a non-monotone mask (a 1 after a 0)
int active_steps(const Tensor& mask);

// clamp negative entries to zero in place; call after every optimizer step
void project_nonneg(Tensor& params);

// Trainable per-layer time step gate. `params` is the trainable tensor;
// scores and the binary mask derive from it. Initialization puts the
// init_steps'th entry at 1.5 and the rest at 0.01 so every active score lands
// inside the surrogate window (1, 2) and the first inactive score stays near 0.
class StepMask {
public:
    StepMask() = default;
    StepMask(int max_steps, int init_steps);

    Tensor& params() { return params_; }
    const Tensor& params() const { return params_; }
    int max_steps() const { return max_steps_; }

    // tape-free materializations of the current state
    Tensor scores() const;
    Tensor mask() const;
    int active() const;
    void project() { project_nonneg(params_); }

private:
    Tensor params_;
    int max_steps_ = 0;
};

} // namespace dts
