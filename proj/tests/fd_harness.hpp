#pragma once

// Finite-difference gradient harness. The analytic float32 gradient of a
// random weighted-sum scalarization is compared against central differences of
// an all-double reference forward (h = 1e-3).

#include <functional>
#include <vector>

#include "dtspike/ops.hpp"
#include "oracles.hpp"

namespace fd {

using LibFn = std::function<dts::Tensor(const std::vector<dts::Tensor>&)>;
// double-precision forward returning the flat output (same layout as the lib op)
using RefForward = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

struct Result {
    double worst = 0.0;
};

// Runs one instance: builds the scalar loss sum(r * op(inputs)) on tape,
// backpropagates, and checks every input's gradient. Returns the worst
// relative error across inputs.
inline double check_gradients(std::vector<dts::Tensor> inputs, const LibFn& lib, const RefForward& ref,
                              dts::Rng& rng, double h = 1e-3) {
    for (auto& t : inputs) t.set_requires_grad(true);

    // probe output size without recording
    dts::Tensor probe = lib(inputs);
    std::vector<float> rw(probe.values().size());
    for (auto& v : rw) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    dts::Tensor r = dts::Tensor::from(probe.shape(), rw);

    dts::GradTape tape;
    {
        dts::GradTape::Scope scope(tape);
        dts::Tensor out = lib(inputs);
        dts::Tensor loss = dts::sum_all(dts::mul(out, r));
        tape.backward(loss);
    }

    std::vector<std::vector<double>> inputs_d;
    for (const auto& t : inputs) inputs_d.push_back(oracle::to_double(t.values()));
    auto scalar_ref = [&](const std::vector<std::vector<double>>& ins) {
        auto out = ref(ins);
        double s = 0.0;
        for (size_t i = 0; i < out.size(); ++i) s += out[i] * static_cast<double>(rw[i]);
        return s;
    };

    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto fd_grad = oracle::finite_diff(scalar_ref, inputs_d, i, h);
        worst = std::max(worst, oracle::max_rel_err(inputs[i].grad(), fd_grad));
    }
    return worst;
}

// All the differentiable-op instances; `reps` random draws per op. Returns the
// worst relative error seen anywhere (acceptance wants < 1e-4 with reps = 20).
double run_all_gradient_checks(int reps, uint64_t seed);

} // namespace fd
