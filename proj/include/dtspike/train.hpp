#pragma once

#include <set>
#include <string>
#include <vector>

#include "dtspike/dataset.hpp"
#include "dtspike/model.hpp"
#include "dtspike/optim.hpp"

namespace dts {

struct TrainConfig {
    float lambda_m = 1e-6f; // mask loss weight
    std::set<LayerGroup> mask_groups = {LayerGroup::qkv, LayerGroup::mlp};
    int t_init = -1; // <= 0: half of t_max, rounded up
    int epochs = 50;
    int batch_size = 32;
    float learning_rate = 0.004f;
    bool cosine_lr = false;
    float weight_decay = 0.02f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float adam_eps = 1e-8f;
    uint64_t seed = 42;
    bool augment_hflip = false;
    bool augment_crop = false;

    int resolved_t_init(int t_max) const { return t_init <= 0 ? (t_max + 1) / 2 : t_init; }
    void validate(int t_max) const; // throws ConfigError naming the field
    AdamWConfig adamw() const { return {learning_rate, beta1, beta2, adam_eps, weight_decay}; }
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0, train_acc = 0, eval_acc = 0, t_avg = 0, sa_percent = 0;
};

struct TrainState {
    double best_eval_acc = -1.0;
    int best_epoch = -1;
    std::vector<EpochStats> history; // one entry per completed epoch
};

// lambda * sum of mask entries over layers in the selected groups; uses the
// mask nodes recorded by the last training forward so gradients reach the
// gate parameters
Tensor mask_loss(Model& model, const std::set<LayerGroup>& groups, float lambda);

Tensor total_loss(const Tensor& logits, const std::vector<int>& labels, Model& model,
                  const TrainConfig& cfg);

struct StepMetrics {
    double loss = 0, accuracy = 0, t_avg = 0;
};
StepMetrics train_step(Model& model, AdamW& opt, const Tensor& images, const std::vector<int>& labels,
                       const TrainConfig& cfg);

struct EvalResult {
    double accuracy = 0, t_avg = 0, sa_percent = 0;
};
EvalResult evaluate(Model& model, const Dataset& ds, int batch_size);

// Full loop: shuffled epochs, per-epoch frozen-mask evaluation, metrics CSV
// ("metrics.csv") and best-accuracy checkpoint ("checkpoint_best.dtss") under
// out_dir. Quiet when verbose is false (tests).
TrainState train_loop(Model& model, const Dataset& train, const Dataset& eval_set, const TrainConfig& cfg,
                      const std::string& out_dir, bool verbose = true);

std::vector<Tensor> trainable_tensors(Model& model);

void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& history);

} // namespace dts
