#pragma once

#include <string>

#include "dtspike/model.hpp"
#include "dtspike/profile.hpp"
#include "dtspike/train.hpp"

namespace dts {

struct DataConfig {
    std::string kind = "synthetic"; // synthetic | cifar10
    std::string path;               // cifar10 batch directory
    uint64_t seed = 7;
    int samples_per_class = 50;
    int eval_samples_per_class = 20;
    float noise = 0.08f;

    void validate() const;
};

struct ProfileConfig {
    EnergyModel energy;
    int histogram_bins = 64;
    int sample_limit = 256;

    void validate() const;
};

struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
    ProfileConfig profile;
    DataConfig data;

    void validate() const;
    // train + eval datasets per the data section
    std::pair<Dataset, Dataset> load_datasets() const;
};

// Sectioned key=value text ([model] / [train] / [profile] / [data], '#' or ';'
// comments). Unknown sections or keys are errors with line numbers; absent
// keys keep their documented defaults.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string serialize_experiment_config(const ExperimentConfig& cfg);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

} // namespace dts
