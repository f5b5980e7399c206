#pragma once

#include <vector>

#include "dtspike/tensor.hpp"

namespace dts {

struct LifConfig {
    float leak = 1.0f;        // membrane carry factor in [0, 1]
    float v_threshold = 1.0f; // spike threshold and spike amplitude
    float gamma = 1.0f;       // surrogate peak value
};

// Leaky integrate-and-fire over a drive sequence. Membrane starts at zero,
// spikes carry amplitude v_threshold, and the threshold amount is subtracted
// from the membrane on each spike (soft reset). Differentiable through the
// active tape via the triangular surrogate.
std::vector<Tensor> lif_forward(const std::vector<Tensor>& drive, const LifConfig& cfg,
                                Tensor* final_membrane = nullptr);

// closed-form surrogate derivative of the spike w.r.t. the pre-reset potential
float lif_surrogate(float h, const LifConfig& cfg);
Tensor lif_surrogate(const Tensor& h, const LifConfig& cfg);

// closed-form window derivative of the step mask w.r.t. its score
float mask_window(float score);
Tensor mask_window(const Tensor& scores);

} // namespace dts
