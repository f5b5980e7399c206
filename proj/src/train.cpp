#include "dtspike/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "dtspike/checkpoint.hpp"
#include "dtspike/probe.hpp"
#include "dtspike/rng.hpp"

namespace dts {

void TrainConfig::validate(int t_max) const {
    auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
    if (lambda_m < 0.0f) fail("lambda_m must be >= 0");
    const int ti = resolved_t_init(t_max);
    if (ti < 1 || ti > t_max)
        fail("t_init = " + std::to_string(t_init) + " outside [1, t_max = " + std::to_string(t_max) + "]");
    if (epochs < 0) fail("epochs must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(learning_rate >= 0.0f)) fail("learning_rate must be >= 0");
    if (weight_decay < 0.0f) fail("weight_decay must be >= 0");
    if (beta1 < 0.0f || beta1 >= 1.0f) fail("beta1 must be in [0, 1)");
    if (beta2 < 0.0f || beta2 >= 1.0f) fail("beta2 must be in [0, 1)");
    if (!(adam_eps > 0.0f)) fail("adam_eps must be > 0");
}

Tensor mask_loss(Model& model, const std::set<LayerGroup>& groups, float lambda) {
    if (lambda == 0.0f) return Tensor::scalar(0.0f);
    if (groups.empty()) {
        static bool warned = false;
        if (!warned) {
            std::cerr << "warning: mask loss weight is nonzero but no layer groups are selected; "
                         "the loss is identically zero\n";
            warned = true;
        }
        return Tensor::scalar(0.0f);
    }
    Tensor total;
    for (auto* l : model.masked_layers()) {
        if (!groups.count(l->group)) continue;
        if (!l->fwd_mask.defined())
            throw InvariantError("mask_loss: no mask nodes; run a training-mode forward first");
        Tensor s = sum_all(l->fwd_mask);
        total = total.defined() ? add(total, s) : s;
    }
    if (!total.defined()) return Tensor::scalar(0.0f);
    return scale(total, lambda);
}

Tensor total_loss(const Tensor& logits, const std::vector<int>& labels, Model& model,
                  const TrainConfig& cfg) {
    Tensor ce = cross_entropy(logits, labels);
    if (cfg.lambda_m == 0.0f || !model.dynamic_masks()) return ce;
    Tensor lm = mask_loss(model, cfg.mask_groups, cfg.lambda_m);
    if (!lm.requires_grad()) return ce; // empty selection contributes nothing
    return add(ce, lm);
}

std::vector<Tensor> trainable_tensors(Model& model) {
    std::vector<Tensor> out;
    for (auto& [name, t] : model.parameters()) out.push_back(t);
    return out;
}

StepMetrics train_step(Model& model, AdamW& opt, const Tensor& images, const std::vector<int>& labels,
                       const TrainConfig& cfg) {
    if (!model.training()) throw InvariantError("train_step: model must be in training mode");
    GradTape tape;
    Tensor logits, loss;
    {
        GradTape::Scope scope(tape);
        logits = model.forward(images);
        loss = total_loss(logits, labels, model, cfg);
    }
    if (!std::isfinite(loss.item())) {
        std::string where = tape.first_non_finite();
        throw NumericError("non-finite loss; first non-finite tensor produced by '" +
                           (where.empty() ? std::string("<loss>") : where) + "'");
    }
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    model.project_gates();

    auto preds = argmax_rows(logits);
    int correct = 0;
    for (size_t i = 0; i < labels.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    StepMetrics m;
    m.loss = loss.item();
    m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    m.t_avg = model.t_avg();
    return m;
}

EvalResult evaluate(Model& model, const Dataset& ds, int batch_size) {
    const bool was_training = model.training();
    model.set_training(false);
    Probe probe;
    int correct = 0;
    const size_t n = ds.size();
    std::vector<size_t> idx(static_cast<size_t>(batch_size));
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), n - start);
        idx.resize(count);
        std::iota(idx.begin(), idx.end(), start);
        Tensor images = ds.batch(idx);
        Tensor logits = model.forward(images, &probe);
        auto preds = argmax_rows(logits);
        for (size_t i = 0; i < count; ++i)
            if (preds[i] == ds.labels[start + i]) ++correct;
    }
    model.set_training(was_training);
    EvalResult r;
    r.accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
    r.t_avg = model.t_avg();
    double slots = 0, spikes = 0;
    for (const auto& l : probe.lifs) {
        slots += l.spike_slots;
        spikes += l.spikes;
    }
    r.sa_percent = slots > 0 ? 100.0 * spikes / slots : 0.0;
    return r;
}

namespace {

Tensor augment_batch(const Dataset& ds, std::span<const size_t> indices, Rng& rng, bool hflip,
                     bool crop) {
    const int S = ds.image_size, C = ds.channels;
    const int64_t B = static_cast<int64_t>(indices.size());
    std::vector<float> buf(static_cast<size_t>(B) * ds.image_len(), 0.0f);
    constexpr int pad = 2;
    for (int64_t b = 0; b < B; ++b) {
        auto img = ds.image(indices[static_cast<size_t>(b)]);
        const bool flip = hflip && rng.uniform() < 0.5;
        int dx = 0, dy = 0;
        if (crop) {
            dx = static_cast<int>(rng.below(2 * pad + 1)) - pad;
            dy = static_cast<int>(rng.below(2 * pad + 1)) - pad;
        }
        float* dst = buf.data() + static_cast<size_t>(b) * ds.image_len();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const int sx0 = flip ? S - 1 - x : x;
                    const int sx = sx0 + dx, sy = y + dy;
                    float v = 0.0f;
                    if (sx >= 0 && sx < S && sy >= 0 && sy < S)
                        v = img[static_cast<size_t>((c * S + sy) * S + sx)];
                    dst[static_cast<size_t>((c * S + y) * S + x)] = v;
                }
    }
    return Tensor::from({B, C, S, S}, std::move(buf));
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw FormatError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::string csv = "epoch,train_loss,train_acc,eval_acc,t_avg,sa_percent\n";
    char line[256];
    for (const auto& e : history) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.train_acc, e.eval_acc, e.t_avg, e.sa_percent);
        csv += line;
    }
    atomic_write(path, csv);
}

TrainState train_loop(Model& model, const Dataset& train, const Dataset& eval_set, const TrainConfig& cfg,
                      const std::string& out_dir, bool verbose) {
    cfg.validate(model.config().max_steps);
    if (train.size() == 0) throw ConfigError("train_loop: empty training dataset");
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = (std::filesystem::path(out_dir) / "metrics.csv").string();
    const std::string ckpt_path = (std::filesystem::path(out_dir) / "checkpoint_best.dtss").string();

    AdamW opt(trainable_tensors(model), cfg.adamw());
    Rng shuffle_rng = derive_stream(cfg.seed, "train.shuffle");
    Rng augment_rng = derive_stream(cfg.seed, "train.augment");

    TrainState state;
    auto consider_best = [&](double eval_acc, int epoch) {
        if (eval_acc > state.best_eval_acc) {
            state.best_eval_acc = eval_acc;
            state.best_epoch = epoch;
            save_checkpoint(ckpt_path, model, &opt);
        }
    };

    if (cfg.epochs == 0) {
        EvalResult ev = evaluate(model, eval_set, cfg.batch_size);
        consider_best(ev.accuracy, 0);
        write_metrics_csv(csv_path, state.history);
        if (verbose)
            std::printf("initial eval: acc %.4f, t_avg %.3f, sa %.2f%%\n", ev.accuracy, ev.t_avg,
                        ev.sa_percent);
        return state;
    }

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.cosine_lr) {
            const double f = 0.5 * (1.0 + std::cos(3.14159265358979323846 * epoch / cfg.epochs));
            opt.set_lr(static_cast<float>(cfg.learning_rate * f));
        }
        shuffle_rng.shuffle(order);
        model.set_training(true);
        double loss_sum = 0, acc_sum = 0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t count = std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
            std::span<const size_t> idx(order.data() + start, count);
            Tensor images = (cfg.augment_hflip || cfg.augment_crop)
                                ? augment_batch(train, idx, augment_rng, cfg.augment_hflip, cfg.augment_crop)
                                : train.batch(idx);
            std::vector<int> labels(count);
            for (size_t i = 0; i < count; ++i) labels[i] = train.labels[idx[i]];
            StepMetrics m = train_step(model, opt, images, labels, cfg);
            loss_sum += m.loss * static_cast<double>(count);
            acc_sum += m.accuracy * static_cast<double>(count);
            seen += count;
        }
        EvalResult ev = evaluate(model, eval_set, cfg.batch_size);
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / static_cast<double>(seen);
        st.train_acc = acc_sum / static_cast<double>(seen);
        st.eval_acc = ev.accuracy;
        st.t_avg = ev.t_avg;
        st.sa_percent = ev.sa_percent;
        state.history.push_back(st);
        consider_best(ev.accuracy, epoch);
        write_metrics_csv(csv_path, state.history);
        if (verbose)
            std::printf("epoch %3d  loss %.4f  train_acc %.4f  eval_acc %.4f  t_avg %.3f  sa %.2f%%\n",
                        epoch, st.train_loss, st.train_acc, st.eval_acc, st.t_avg, st.sa_percent);
    }
    return state;
}

} // namespace dts
