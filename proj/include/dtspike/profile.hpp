#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dtspike/dataset.hpp"
#include "dtspike/model.hpp"

namespace dts {

struct EnergyModel {
    double e_ac_pj = 1.8;    // accumulate
    double e_mac_pj = 13.32; // multiply-accumulate
    double e_check_pj = 0.05; // zero check per presented activation slot
    double e_mem_pj = 5.0;   // per memory access (potential or weight)

    void validate() const;
    double mac_ac_ratio() const { return e_mac_pj / e_ac_pj; }
    bool operator==(const EnergyModel&) const = default;
};

// Per dot-product site, everything normalized per inference. `s_avg` is the
// average number of spikes per input neuron per inference; sops = s_avg *
// dense_flops by construction.
struct OpProfile {
    std::string name;
    bool spike_input = true;
    double dense_flops = 0; // single-presentation multiply count
    double s_avg = 0;
    double sops = 0;
    double check_slots = 0;
    double scale_mults = 0; // attention scale multiplies (nonzero outputs)
    double executed_steps = 0;
};

struct LayerActivity {
    std::string name;
    double neurons = 0;
    double active_steps = 0;
    double spikes_per_neuron = 0; // masked output spikes per neuron per inference
};

struct ProfileReport {
    double t_avg = 0;
    double sa_percent = 0;
    int max_steps = 1;
    double flops = 0; // dense single-presentation total
    double sops = 0;
    double embed_macs = 0;
    double scale_mults = 0;
    double check_slots = 0;
    double potential_accesses = 0; // 2 per neuron per active step
    double weight_accesses = 0;    // sparsity-scaled, plus embedding
    double compute_energy_pj = 0, memory_energy_pj = 0, total_energy_pj = 0;
    std::vector<OpProfile> ops;
    std::vector<LayerActivity> layers;
    EnergyModel energy;
};

// Eval-mode measurement over up to sample_limit samples; masks are the
// model's current materialized masks.
ProfileReport profile(Model& model, const Dataset& sample, const EnergyModel& energy, int batch_size = 32,
                      int sample_limit = 256);

// counts -> energies; used by profile() and by the monotonicity tests
void recompute_energy(ProfileReport& report);

struct EnergyRatios {
    double ce = 1, me = 1, te = 1;
};
// report_b is the 1x baseline; both reports must come from the same EnergyModel
EnergyRatios compare_energy(const ProfileReport& a, const ProfileReport& baseline);

struct LayerHistograms {
    std::string layer;
    double lo = 0, hi = 0; // shared bin range across this layer's steps
    int bins = 1;
    std::vector<std::vector<double>> step_masses; // [step][bin], each sums to 1
};
struct HistogramSet {
    std::vector<LayerHistograms> layers;
};

HistogramSet collect_histograms(Model& model, const Dataset& sample, int bins, int batch_size = 32,
                                int sample_limit = 256);

// 0 with a warning if either mass vector is all-zero
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// similarity of each step's histogram against the first step's; size T-1
std::vector<double> step_similarities(const LayerHistograms& h);
// 1 - min over steps; 0 for single-step layers
double layer_sensitivity(const LayerHistograms& h);

void print_profile_table(const ProfileReport& r, std::ostream& os);
void write_profile_csv(const ProfileReport& r, const std::string& path);
void print_sensitivity_table(const HistogramSet& h, std::ostream& os);
void write_sensitivity_csv(const HistogramSet& h, const std::string& path);
void write_histograms_csv(const HistogramSet& h, const std::string& path);

} // namespace dts
