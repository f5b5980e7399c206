// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// fails. Criterion 6 trains three desk-scale models and dominates the runtime.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "dtspike/checkpoint.hpp"
#include "dtspike/config.hpp"
#include "dtspike/profile.hpp"
#include "dtspike/train.hpp"
#include "fd_harness.hpp"
#include "oracles.hpp"

using namespace dts;

namespace {

int g_failures = 0;

void report(int criterion, const char* what, bool pass, const std::string& detail = "") {
    std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion, what,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

ModelConfig desk_model() {
    ModelConfig cfg;
    cfg.blocks = 1;
    cfg.embed_dim = 32;
    cfg.heads = 2;
    cfg.patch_size = 4;
    cfg.image_size = 16;
    cfg.in_channels = 1;
    cfg.num_classes = 10;
    cfg.max_steps = 4;
    return cfg;
}

std::pair<Dataset, Dataset> desk_data() {
    SyntheticSpec sp;
    sp.seed = 7;
    sp.num_classes = 10;
    sp.per_class = 50;
    sp.image_size = 16;
    sp.noise = 0.05f;
    Dataset train = make_synthetic(sp);
    sp.per_class = 20;
    sp.stream = "data.synthetic.eval";
    Dataset eval_set = make_synthetic(sp);
    return {std::move(train), std::move(eval_set)};
}

TrainConfig desk_train(float lambda) {
    TrainConfig tc;
    tc.lambda_m = lambda;
    tc.t_init = 2;
    tc.epochs = 50;
    tc.batch_size = 32;
    tc.learning_rate = 0.004f;
    tc.weight_decay = 0.02f;
    tc.seed = 42;
    return tc;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

char fmt_buf[256];
std::string fmt(const char* f, ...) {
    va_list args;
    va_start(args, f);
    std::vsnprintf(fmt_buf, sizeof(fmt_buf), f, args);
    va_end(args);
    return fmt_buf;
}

// 1. finite-difference fidelity over every differentiable op
void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const double worst = fd::run_all_gradient_checks(20, 20260808);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, "gradient fidelity vs central differences", worst < 1e-4 && secs < 60.0,
           fmt("max rel err %.3g, %.1fs", worst, secs));
}

// 2. surrogate closed forms, boundaries included, exact
void criterion_2() {
    bool ok = true;
    LifConfig lif{1.0f, 0.8f, 1.3f};
    auto triangle = [&](float h) {
        const float t = 1.0f - std::fabs(h / lif.v_threshold - 1.0f);
        return t > 0.0f ? lif.gamma / lif.v_threshold * t : 0.0f;
    };
    for (float h : {0.0f, lif.v_threshold, 2.0f * lif.v_threshold})
        ok = ok && lif_surrogate(h, lif) == triangle(h);
    dts::Rng rng(2, "acc.surrogate");
    for (int i = 0; i < 1000; ++i) {
        const float h = static_cast<float>(rng.uniform(-1.0, 3.0));
        ok = ok && lif_surrogate(h, lif) == triangle(h);
    }
    auto window = [](float s) { return s > 0.0f && s < 2.0f ? 1.0f : 0.0f; };
    for (float s : {0.0f, 1.0f, 2.0f}) ok = ok && mask_window(s) == window(s);
    for (int i = 0; i < 1000; ++i) {
        const float s = static_cast<float>(rng.uniform(-1.0, 3.0));
        ok = ok && mask_window(s) == window(s);
    }
    report(2, "surrogate exactness at 1000 points plus boundaries", ok);
}

// 3. tensor LIF vs the scalar simulator
void criterion_3() {
    dts::Rng rng(3, "acc.lif");
    const float leaks[3] = {0.0f, 0.5f, 1.0f};
    double worst = 0.0;
    for (int cse = 0; cse < 100; ++cse) {
        const int64_t rows = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t cols = 1 + static_cast<int64_t>(rng.below(8));
        const int T = 1 + static_cast<int>(rng.below(6));
        LifConfig cfg{leaks[rng.below(3)], 1.0f, 1.0f};
        std::vector<Tensor> drive;
        for (int t = 0; t < T; ++t) drive.push_back(oracle::random_tensor({rows, cols}, rng, -0.5f, 1.5f));
        auto spikes = lif_forward(drive, cfg);
        for (int64_t i = 0; i < rows * cols; ++i) {
            std::vector<double> d;
            for (int t = 0; t < T; ++t) d.push_back(drive[static_cast<size_t>(t)].values()[static_cast<size_t>(i)]);
            auto ref = oracle::lif_scalar(d, cfg.leak, cfg.v_threshold);
            for (int t = 0; t < T; ++t)
                worst = std::max(worst,
                                 std::fabs(spikes[static_cast<size_t>(t)].values()[static_cast<size_t>(i)] -
                                           ref[static_cast<size_t>(t)]));
        }
    }
    report(3, "LIF oracle equivalence over 100 random cases", worst < 1e-5, fmt("max abs err %.3g", worst));
}

// 4. mask mechanics against the brute-force oracle, 10000 draws
void criterion_4() {
    dts::Rng rng(4, "acc.mask");
    int failures = 0;
    for (int i = 0; i < 10000; ++i) {
        const int T = 1 + static_cast<int>(rng.below(8));
        std::vector<float> p(static_cast<size_t>(T));
        for (auto& v : p) v = static_cast<float>(rng.uniform(0.0, 2.0));
        Tensor params = Tensor::from({T}, p);
        Tensor ts = step_scores(params);
        Tensor tm = step_mask_of(ts);
        bool ok = true;
        int count = 0;
        for (int t = 0; t < T; ++t) {
            if (t > 0 && ts.values()[static_cast<size_t>(t)] > ts.values()[static_cast<size_t>(t - 1)]) ok = false;
            const float m = tm.values()[static_cast<size_t>(t)];
            if (m != 0.0f && m != 1.0f) ok = false;
            if (t > 0 && m > tm.values()[static_cast<size_t>(t - 1)]) ok = false;
            if (ts.values()[static_cast<size_t>(t)] >= 1.0f) ++count;
        }
        if (active_steps(tm) != count) ok = false;
        auto ref = oracle::scores_by_coeff(oracle::to_double(params.values()));
        for (int t = 0; t < T; ++t)
            if (std::fabs(ts.values()[static_cast<size_t>(t)] - ref[static_cast<size_t>(t)]) > 1e-5) ok = false;
        if (!ok) ++failures;
    }
    report(4, "mask mechanics over 10000 random parameter draws", failures == 0,
           fmt("%d failures", failures));
}

// 5. reported t_avg equals the hand-computed mask-sum mean, exactly
void criterion_5() {
    ModelConfig mc = desk_model();
    Model model(mc, 5, mc.max_steps);
    dts::Rng rng(5, "acc.tavg");
    bool ok = true;
    for (int cse = 0; cse < 50; ++cse) {
        double sum = 0.0;
        for (auto* l : model.masked_layers()) {
            const int steps = static_cast<int>(rng.below(static_cast<uint64_t>(mc.max_steps + 1)));
            auto vals = l->gate.params().values_mut();
            std::fill(vals.begin(), vals.end(), 0.0f);
            if (steps > 0) vals[static_cast<size_t>(steps - 1)] = 1.5f;
            sum += steps;
        }
        const double expect = sum / static_cast<double>(model.masked_layers().size());
        if (model.t_avg() != expect) ok = false;
    }
    report(5, "t_avg equals the per-layer mask-sum mean on 50 configs", ok);
}

struct RunResult {
    double final_train_acc = 0, best_train_acc = 0, final_t_avg = 0, final_eval_acc = 0;
};

RunResult run_desk(float lambda, const std::string& out_dir) {
    auto [train_ds, eval_ds] = desk_data();
    TrainConfig tc = desk_train(lambda);
    Model model(desk_model(), tc.seed, tc.resolved_t_init(4));
    TrainState st = train_loop(model, train_ds, eval_ds, tc, out_dir, false);
    RunResult r;
    for (const auto& e : st.history) r.best_train_acc = std::max(r.best_train_acc, e.train_acc);
    r.final_train_acc = st.history.back().train_acc;
    r.final_t_avg = st.history.back().t_avg;
    r.final_eval_acc = st.history.back().eval_acc;
    return r;
}

// 6. the mask-loss pruning trend at three weights
void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto tmp = std::filesystem::temp_directory_path() / "dtspike_acceptance6";
    std::filesystem::remove_all(tmp);
    RunResult a = run_desk(0.0f, (tmp / "l0").string());
    RunResult b = run_desk(1e-4f, (tmp / "l4").string());
    RunResult c = run_desk(1e-2f, (tmp / "l2").string());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool pass_a = a.best_train_acc >= 0.90;
    const bool pass_b = b.final_t_avg <= a.final_t_avg - 0.5 && b.final_train_acc >= a.final_train_acc - 0.03;
    const bool pass_c = c.final_t_avg < b.final_t_avg;
    report(6, "mask-loss pruning trend (lambda 0 / 1e-4 / 1e-2)", pass_a && pass_b && pass_c,
           fmt("acc %.3f/%.3f/%.3f t_avg %.3f/%.3f/%.3f %.0fs", a.final_train_acc, b.final_train_acc,
               c.final_train_acc, a.final_t_avg, b.final_t_avg, c.final_t_avg, secs));
    std::filesystem::remove_all(tmp);
}

// 7. mask loss reaches only the selected groups; the CE path reaches all
void criterion_7() {
    ModelConfig mc = desk_model();
    auto [train_ds, eval_ds] = desk_data();
    (void)eval_ds;
    TrainConfig tc = desk_train(1e-4f);
    Model model(mc, tc.seed, 2);
    model.set_training(true);
    AdamW opt(trainable_tensors(model), tc.adamw());

    // a few warmup steps so every layer spikes
    std::vector<size_t> idx(32);
    std::iota(idx.begin(), idx.end(), 0);
    Tensor images = train_ds.batch(idx);
    std::vector<int> labels(train_ds.labels.begin(), train_ds.labels.begin() + 32);
    for (int i = 0; i < 5; ++i) train_step(model, opt, images, labels, tc);

    GradTape tape;
    Tensor ce, lm;
    {
        GradTape::Scope scope(tape);
        Tensor logits = model.forward(images);
        ce = cross_entropy(logits, labels);
        lm = mask_loss(model, {LayerGroup::qkv, LayerGroup::mlp}, tc.lambda_m);
    }
    auto zero_all = [&] {
        for (auto& [name, t] : model.parameters()) t.zero_grad();
    };
    bool ok = true;
    zero_all();
    tape.backward(lm);
    for (auto* l : model.masked_layers()) {
        double g = 0;
        for (float v : l->gate.params().grad()) g += std::fabs(v);
        if (l->group == LayerGroup::sps || l->group == LayerGroup::attn) ok = ok && g == 0.0;
    }
    zero_all();
    tape.backward(ce);
    for (auto* l : model.masked_layers()) {
        double g = 0;
        for (float v : l->gate.params().grad()) g += std::fabs(v);
        ok = ok && g > 0.0;
    }
    report(7, "group-selective mask loss with live CE gradients", ok);
}

// 8. energy model: ratio, SOP counts, monotonicity
void criterion_8() {
    EnergyModel e;
    bool ok = std::fabs(e.mac_ac_ratio() - 7.4) < 1e-9;

    // 2x2 linear layer under controlled sparsity vs brute-force multiplication count
    for (int nz = 0; nz <= 2; ++nz) {
        std::vector<float> x = {0.0f, 0.0f};
        for (int i = 0; i < nz; ++i) x[static_cast<size_t>(i)] = 1.0f;
        double count = 0; // multiplications a spike-gated MAC array performs
        for (int i = 0; i < 2; ++i)
            if (x[static_cast<size_t>(i)] != 0.0f) count += 2; // fanout
        const double dense = 4, slots = 2;
        const double sops = dense * static_cast<double>(nz) / slots;
        ok = ok && sops == count;
    }

    dts::Rng rng(8, "acc.energy");
    for (int cse = 0; cse < 100; ++cse) {
        ProfileReport r;
        r.embed_macs = rng.uniform(0, 1000);
        r.scale_mults = rng.uniform(0, 1000);
        r.sops = rng.uniform(0, 1000);
        r.check_slots = rng.uniform(0, 1000);
        r.potential_accesses = rng.uniform(0, 1000);
        r.weight_accesses = rng.uniform(0, 1000);
        recompute_energy(r);
        for (int which = 0; which < 4; ++which) {
            ProfileReport up = r;
            if (which == 0) up.energy.e_ac_pj *= 2.0;
            if (which == 1) up.energy.e_mac_pj *= 2.0;
            if (which == 2) up.energy.e_check_pj *= 2.0;
            if (which == 3) up.energy.e_mem_pj *= 2.0;
            recompute_energy(up);
            ok = ok && up.compute_energy_pj >= r.compute_energy_pj &&
                 up.memory_energy_pj >= r.memory_energy_pj && up.total_energy_pj >= r.total_energy_pj;
        }
    }
    report(8, "energy model: 7.4x ratio, exact SOPs, monotonicity", ok);
}

// 9. sensitivity math and histogram mass sums
void criterion_9() {
    bool ok = cosine_similarity({0.25, 0.75}, {0.25, 0.75}) == 1.0;
    ok = ok && cosine_similarity({1, 0}, {0, 1}) == 0.0;
    ok = ok && std::fabs(cosine_similarity({0.5, 0.5}, {1, 0}) - 1.0 / std::sqrt(2.0)) < 1e-9;

    ModelConfig mc = desk_model();
    Model model(mc, 9, mc.max_steps);
    model.set_training(false);
    auto [train_ds, eval_ds] = desk_data();
    (void)train_ds;
    HistogramSet h = collect_histograms(model, eval_ds, 64, 32, 64);
    ok = ok && h.layers.size() == model.masked_layers().size();
    for (const auto& l : h.layers)
        for (const auto& m : l.step_masses) {
            double sum = 0;
            for (double v : m) sum += v;
            ok = ok && std::fabs(sum - 1.0) < 1e-6;
        }
    report(9, "cosine sensitivity values and histogram mass sums", ok);
}

// 10. bitwise reproducibility and the checkpoint round trip
void criterion_10() {
    const auto tmp = std::filesystem::temp_directory_path() / "dtspike_acceptance10";
    std::filesystem::remove_all(tmp);
    auto [train_ds, eval_ds] = desk_data();
    TrainConfig tc = desk_train(1e-4f);
    tc.epochs = 5;

    Model m1(desk_model(), tc.seed, 2);
    TrainState s1 = train_loop(m1, train_ds, eval_ds, tc, (tmp / "a").string(), false);
    Model m2(desk_model(), tc.seed, 2);
    TrainState s2 = train_loop(m2, train_ds, eval_ds, tc, (tmp / "b").string(), false);

    const std::string csv1 = read_file((tmp / "a" / "metrics.csv").string());
    const std::string csv2 = read_file((tmp / "b" / "metrics.csv").string());
    bool ok = !csv1.empty() && csv1 == csv2;

    Model fresh(desk_model(), tc.seed, 2);
    load_checkpoint((tmp / "a" / "checkpoint_best.dtss").string(), fresh);
    EvalResult ev = evaluate(fresh, eval_ds, tc.batch_size);
    ok = ok && ev.accuracy == s1.best_eval_acc && s1.best_eval_acc == s2.best_eval_acc;
    report(10, "same-seed CSV identity and checkpoint round trip",
           ok, fmt("best acc %.4f", s1.best_eval_acc));
    std::filesystem::remove_all(tmp);
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", g_failures);
    return 1;
}
