#include "dtspike/lif.hpp"

#include <cmath>

#include "dtspike/ops.hpp"

namespace dts {

std::vector<Tensor> lif_forward(const std::vector<Tensor>& drive, const LifConfig& cfg,
                                Tensor* final_membrane) {
    if (drive.empty()) throw DimensionError("lif_forward: drive sequence must cover at least one step");
    std::vector<Tensor> spikes;
    spikes.reserve(drive.size());
    Tensor u; // membrane after the previous step; zero at sequence start
    for (size_t t = 0; t < drive.size(); ++t) {
        if (drive[t].shape() != drive[0].shape())
            throw DimensionError("lif_forward: step " + std::to_string(t) + " shape " +
                                 shape_str(drive[t].shape()) + " differs from " + shape_str(drive[0].shape()));
        Tensor h = t == 0 ? drive[t] : add(scale(u, cfg.leak), drive[t]);
        Tensor o = spike_threshold(h, cfg.v_threshold, cfg.gamma);
        u = sub(h, o);
        spikes.push_back(std::move(o));
    }
    if (final_membrane) *final_membrane = u;
    return spikes;
}

float lif_surrogate(float h, const LifConfig& cfg) {
    const float t = 1.0f - std::fabs(h / cfg.v_threshold - 1.0f);
    return t > 0.0f ? cfg.gamma / cfg.v_threshold * t : 0.0f;
}

Tensor lif_surrogate(const Tensor& h, const LifConfig& cfg) {
    std::vector<float> out(h.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = lif_surrogate(h.values()[i], cfg);
    return Tensor::from(h.shape(), std::move(out));
}

float mask_window(float score) { return score > 0.0f && score < 2.0f ? 1.0f : 0.0f; }

Tensor mask_window(const Tensor& scores) {
    std::vector<float> out(scores.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = mask_window(scores.values()[i]);
    return Tensor::from(scores.shape(), std::move(out));
}

} // namespace dts
