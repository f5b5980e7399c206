#pragma once

#include <vector>

#include "dtspike/tensor.hpp"

namespace dts {

// elementwise, same-shape
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);

// shape ops (copying; tensors stay contiguous row-major)
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& dims);
Tensor concat0(const std::vector<Tensor>& parts);
std::vector<Tensor> split0(const Tensor& a, int64_t parts);

// batched matrix product: [..., m, k] x [..., k, n] -> [..., m, n],
// batch dims broadcast numpy-style
Tensor matmul(const Tensor& a, const Tensor& b);

// cross-correlation, no bias: x [B,Cin,H,W], w [Cout,Cin,kh,kw]
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);

struct BatchNormState {
    Tensor running_mean, running_var;
    int64_t batches = 0;
};

// x [N,C,...]; training normalizes over everything but the channel dim and
// updates the running stats; eval applies the running affine
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool training, float momentum = 0.1f, float eps = 1e-5f);

// mean over the batch of -log softmax(logits)[label], max-stabilized
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_spatial(const Tensor& a); // [N,C,H,W] -> [N,C]

// spike emission: v_th where h > v_th, else 0; backward substitutes the
// triangular surrogate (gamma/v_th) * max(0, 1 - |h/v_th - 1|)
Tensor spike_threshold(const Tensor& h, float v_threshold, float gamma);

// binary step mask: 1 where score >= 1, else 0; backward substitutes the
// window 1 on (0, 2), 0 elsewhere
Tensor mask_threshold(const Tensor& scores);

// scores[t] = sum_{i >= t} params[i]; right-to-left accumulation so the
// result is non-increasing for non-negative params even in float
Tensor suffix_sum(const Tensor& params);

// y * gate[index]; gradient reaches both y and the gate entry
Tensor scale_by_entry(const Tensor& y, const Tensor& gate, int64_t index);

std::vector<int> argmax_rows(const Tensor& logits);

} // namespace dts
