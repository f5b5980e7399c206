#include "dtspike/stepmask.hpp"

#include "dtspike/ops.hpp"

namespace dts {

Tensor step_scores(const Tensor& params) {
    for (float v : params.values())
        if (v < 0.0f)
            throw InvariantError("step_scores: negative parameter entry " + std::to_string(v) +
                                 " (projection was skipped)");
    return suffix_sum(params);
}

Tensor step_mask_of(const Tensor& scores) {
    auto v = scores.values();
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1]) throw InvariantError("step_mask_of: scores increase at step " + std::to_string(i));
    return mask_threshold(scores);
}

int active_steps(const Tensor& mask) {
    int count = 0;
    bool closed = false;
    for (float v : mask.values()) {
        if (v != 0.0f && v != 1.0f) throw InvariantError("active_steps: mask entry not binary");
        if (v == 1.0f) {
            if (closed) throw InvariantError("active_steps: active step after an inactive one");
            ++count;
        } else {
            closed = true;
        }
    }
    return count;
}

void project_nonneg(Tensor& params) {
    for (float& v : params.values_mut())
        if (v < 0.0f) v = 0.0f;
}

StepMask::StepMask(int max_steps, int init_steps) : max_steps_(max_steps) {
    if (max_steps < 1) throw ConfigError("StepMask: max_steps must be >= 1");
    if (init_steps < 1 || init_steps > max_steps)
        throw ConfigError("StepMask: init_steps " + std::to_string(init_steps) + " outside [1, " +
                          std::to_string(max_steps) + "]");
    std::vector<float> p(static_cast<size_t>(max_steps), 0.01f);
    p[static_cast<size_t>(init_steps - 1)] = 1.5f;
    params_ = Tensor::from({max_steps}, std::move(p));
    params_.set_requires_grad(true);
}

Tensor StepMask::scores() const {
    float acc = 0.0f;
    std::vector<float> out(params_.values().size());
    for (size_t i = out.size(); i-- > 0;) {
        acc += params_.values()[i];
        out[i] = acc;
    }
    return Tensor::from(params_.shape(), std::move(out));
}

Tensor StepMask::mask() const {
    Tensor s = scores();
    std::vector<float> out(s.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = s.values()[i] >= 1.0f ? 1.0f : 0.0f;
    return Tensor::from(s.shape(), std::move(out));
}

int StepMask::active() const { return active_steps(mask()); }

} // namespace dts
