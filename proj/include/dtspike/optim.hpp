#pragma once

#include <cstdint>
#include <vector>

#include "dtspike/tensor.hpp"

namespace dts {

struct AdamWConfig {
    float lr = 0.004f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.02f;
};

// Decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);

    void step();
    void zero_grad();

    void set_lr(float lr) { cfg_.lr = lr; }
    float lr() const { return cfg_.lr; }
    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }

    const std::vector<Tensor>& params() const { return params_; }
    std::vector<float>& moment1(size_t i) { return m_[i]; }
    std::vector<float>& moment2(size_t i) { return v_[i]; }
    const std::vector<float>& moment1(size_t i) const { return m_[i]; }
    const std::vector<float>& moment2(size_t i) const { return v_[i]; }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
};

} // namespace dts
