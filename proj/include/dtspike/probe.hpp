#pragma once

#include <string>
#include <vector>

namespace dts {

// Instrumentation sink filled during eval-mode forwards. Ops and LIF layers
// appear in a fixed network order, so accumulation across batches addresses
// records by cursor position.
struct ProbeOp {
    std::string name;
    bool spike_input = true;  // false only for the input embedding conv
    double dense_flops = 0;   // dense multiply count per sample per presentation
    double input_slots = 0;   // input elements per sample
    double executed_step_samples = 0;
    double input_nonzero = 0;   // over executed steps and samples
    double presented_slots = 0; // input_slots * batch, per executed step
    double sops = 0;            // dense_flops * nonzero fraction, totalled over samples
    double output_nonzero = 0;  // attention products: nonzero outputs (scale multiplies)
};

struct ProbeLif {
    std::string name;
    double neurons = 0;      // per sample
    double active_steps = 0; // materialized mask sum at probe time
    double spike_slots = 0;  // neurons * active_steps * samples
    double spikes = 0;       // nonzero masked outputs
    std::vector<std::vector<float>> drive; // per step, appended across batches
};

struct Probe {
    bool record_drives = false;
    double samples = 0;
    std::vector<ProbeOp> ops;
    std::vector<ProbeLif> lifs;

    void begin_batch(double batch_samples) {
        samples += batch_samples;
        op_cursor_ = 0;
        lif_cursor_ = 0;
    }

    size_t op(const std::string& name, bool spike_input, double dense_flops, double input_slots) {
        if (op_cursor_ == ops.size()) {
            ProbeOp o;
            o.name = name;
            o.spike_input = spike_input;
            o.dense_flops = dense_flops;
            o.input_slots = input_slots;
            ops.push_back(std::move(o));
        }
        return op_cursor_++;
    }

    size_t lif(const std::string& name, double neurons, double active_steps, int max_steps) {
        if (lif_cursor_ == lifs.size()) {
            ProbeLif l;
            l.name = name;
            l.neurons = neurons;
            l.active_steps = active_steps;
            if (record_drives) l.drive.resize(static_cast<size_t>(max_steps));
            lifs.push_back(std::move(l));
        }
        return lif_cursor_++;
    }

private:
    size_t op_cursor_ = 0;
    size_t lif_cursor_ = 0;
};

} // namespace dts
