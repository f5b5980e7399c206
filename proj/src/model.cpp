#include "dtspike/model.hpp"

#include <cmath>

#include "dtspike/rng.hpp"

namespace dts {

const char* to_string(LayerGroup g) {
    switch (g) {
    case LayerGroup::sps: return "sps";
    case LayerGroup::qkv: return "qkv";
    case LayerGroup::attn: return "attn";
    case LayerGroup::mlp: return "mlp";
    }
    return "?";
}

std::optional<LayerGroup> layer_group_from(const std::string& s) {
    if (s == "sps") return LayerGroup::sps;
    if (s == "qkv") return LayerGroup::qkv;
    if (s == "attn") return LayerGroup::attn;
    if (s == "mlp") return LayerGroup::mlp;
    return std::nullopt;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
    if (blocks < 1) fail("blocks must be >= 1");
    if (embed_dim < 1) fail("embed_dim must be >= 1");
    if (heads < 1) fail("heads must be >= 1");
    if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (image_size < 1) fail("image_size must be >= 1");
    if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
    if (in_channels < 1) fail("in_channels must be >= 1");
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (max_steps < 1) fail("t_max must be >= 1");
    if (!(attn_scale > 0.0f)) fail("attn_scale must be positive");
    if (sps_stages < 1) fail("sps_stages must be >= 1");
    if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
    const int div = 1 << (sps_stages - 1);
    if (embed_dim % div != 0 || embed_dim / div < 1)
        fail("embed_dim must be divisible by 2^(sps_stages-1)");
    auto check_lif = [&](const LifConfig& l, const char* where) {
        if (l.leak < 0.0f || l.leak > 1.0f) fail(std::string(where) + ": leak must be in [0, 1]");
        if (!(l.v_threshold > 0.0f)) fail(std::string(where) + ": v_threshold must be positive");
        if (!(l.gamma > 0.0f)) fail(std::string(where) + ": surrogate gamma must be positive");
    };
    check_lif(lif, "lif");
    for (const auto& [g, l] : lif_overrides) check_lif(l, to_string(g));
}

uint64_t ModelConfig::digest() const {
    std::string s = arch_name();
    auto put = [&s](const std::string& k, double v) { s += ";" + k + "=" + std::to_string(v); };
    put("heads", heads);
    put("patch", patch_size);
    put("image", image_size);
    put("chan", in_channels);
    put("classes", num_classes);
    put("tmax", max_steps);
    put("scale", attn_scale);
    put("sps", sps_stages);
    put("mlp", mlp_ratio);
    put("leak", lif.leak);
    put("vth", lif.v_threshold);
    put("gamma", lif.gamma);
    for (const auto& [g, l] : lif_overrides) {
        s += ";";
        s += to_string(g);
        put(".leak", l.leak);
        put(".vth", l.v_threshold);
        put(".gamma", l.gamma);
    }
    return fnv1a64(s);
}

std::string ModelConfig::arch_name() const {
    return "spikformer-" + std::to_string(blocks) + "-" + std::to_string(embed_dim);
}

LifConfig ModelConfig::lif_for(LayerGroup g) const {
    auto it = lif_overrides.find(g);
    return it == lif_overrides.end() ? lif : it->second;
}

Model::ConvUnit Model::make_conv(const std::string& name, int cin, int cout, int k, int stride,
                                 int padding) {
    ConvUnit u;
    u.stride = stride;
    u.padding = padding;
    u.bn_gamma = Tensor::full({cout}, 1.0f).set_requires_grad(true).set_label(name + ".bn.gamma");
    u.bn_beta = Tensor::zeros({cout}).set_requires_grad(true).set_label(name + ".bn.beta");
    u.bn.running_mean = Tensor::zeros({cout}).set_label(name + ".bn.running_mean");
    u.bn.running_var = Tensor::full({cout}, 1.0f).set_label(name + ".bn.running_var");
    u.w = Tensor::zeros({cout, cin, k, k});
    u.w.set_requires_grad(true).set_label(name + ".conv.w");
    return u;
}

MaskedLif Model::make_lif(const std::string& name, LayerGroup group) {
    MaskedLif l;
    l.name = name;
    l.group = group;
    l.lif = cfg_.lif_for(group);
    l.gate = StepMask(cfg_.max_steps, init_steps_);
    l.gate.params().set_label(name + ".gate");
    if (!dynamic_) l.gate.params().set_requires_grad(false);
    return l;
}

void Model::register_unit(ConvUnit& u, MaskedLif& l) {
    params_.push_back({u.w.label(), u.w});
    params_.push_back({u.bn_gamma.label(), u.bn_gamma});
    params_.push_back({u.bn_beta.label(), u.bn_beta});
    buffers_.push_back({u.bn.running_mean.label(), u.bn.running_mean});
    buffers_.push_back({u.bn.running_var.label(), u.bn.running_var});
    if (dynamic_) params_.push_back({l.gate.params().label(), l.gate.params()});
    registry_.push_back(&l);
}

Model::Model(const ModelConfig& cfg, uint64_t seed, int init_steps, bool dynamic_masks)
    : cfg_(cfg), dynamic_(dynamic_masks) {
    cfg_.validate();
    init_steps_ = init_steps <= 0 ? (cfg_.max_steps + 1) / 2 : init_steps;
    if (init_steps_ > cfg_.max_steps)
        throw ConfigError("t_init " + std::to_string(init_steps_) + " exceeds t_max " +
                          std::to_string(cfg_.max_steps));

    const int S = cfg_.sps_stages;
    const int D = cfg_.embed_dim;
    sps_.resize(static_cast<size_t>(S));
    int cin = cfg_.in_channels;
    for (int i = 0; i < S; ++i) {
        const int cout = D >> (S - 1 - i);
        const std::string name = "sps" + std::to_string(i);
        const bool last = i == S - 1;
        sps_[static_cast<size_t>(i)].conv =
            last ? make_conv(name, cin, cout, cfg_.patch_size, cfg_.patch_size, 0)
                 : make_conv(name, cin, cout, 3, 1, 1);
        sps_[static_cast<size_t>(i)].lif = make_lif(name, LayerGroup::sps);
        cin = cout;
    }
    blocks_.resize(static_cast<size_t>(cfg_.blocks));
    for (int b = 0; b < cfg_.blocks; ++b) {
        Block& blk = blocks_[static_cast<size_t>(b)];
        const std::string bn = "block" + std::to_string(b);
        blk.q = make_conv(bn + ".q", D, D, 1, 1, 0);
        blk.k = make_conv(bn + ".k", D, D, 1, 1, 0);
        blk.v = make_conv(bn + ".v", D, D, 1, 1, 0);
        blk.proj = make_conv(bn + ".proj", D, D, 1, 1, 0);
        blk.fc1 = make_conv(bn + ".mlp1", D, D * cfg_.mlp_ratio, 1, 1, 0);
        blk.fc2 = make_conv(bn + ".mlp2", D * cfg_.mlp_ratio, D, 1, 1, 0);
        blk.q_lif = make_lif(bn + ".q", LayerGroup::qkv);
        blk.k_lif = make_lif(bn + ".k", LayerGroup::qkv);
        blk.v_lif = make_lif(bn + ".v", LayerGroup::qkv);
        blk.attn_lif = make_lif(bn + ".attn", LayerGroup::attn);
        blk.proj_lif = make_lif(bn + ".proj", LayerGroup::attn);
        blk.fc1_lif = make_lif(bn + ".mlp1", LayerGroup::mlp);
        blk.fc2_lif = make_lif(bn + ".mlp2", LayerGroup::mlp);
    }
    head_w_ = Tensor::zeros({D, cfg_.num_classes});
    head_w_.set_requires_grad(true).set_label("head.w");

    // registration order fixes both checkpoint layout and init stream consumption
    for (auto& st : sps_) register_unit(st.conv, st.lif);
    for (auto& blk : blocks_) {
        register_unit(blk.q, blk.q_lif);
        register_unit(blk.k, blk.k_lif);
        register_unit(blk.v, blk.v_lif);
        if (dynamic_) params_.push_back({blk.attn_lif.gate.params().label(), blk.attn_lif.gate.params()});
        registry_.push_back(&blk.attn_lif);
        register_unit(blk.proj, blk.proj_lif);
        register_unit(blk.fc1, blk.fc1_lif);
        register_unit(blk.fc2, blk.fc2_lif);
    }
    params_.push_back({head_w_.label(), head_w_});

    Rng rng = derive_stream(seed, "init");
    for (auto& [name, t] : params_) {
        if (name == "head.w") {
            const float std = std::sqrt(1.0f / static_cast<float>(D));
            for (float& v : t.values_mut()) v = rng.normal_f() * std;
        } else if (name.ends_with(".conv.w")) {
            const auto& s = t.shape();
            const float fan_in = static_cast<float>(s[1] * s[2] * s[3]);
            const float std = std::sqrt(2.0f / fan_in);
            for (float& v : t.values_mut()) v = rng.normal_f() * std;
        }
        // bn affine and gate params keep their deterministic init
    }
}

std::vector<NamedTensor> Model::state_tensors() {
    std::vector<NamedTensor> out = params_;
    out.insert(out.end(), buffers_.begin(), buffers_.end());
    return out;
}

double Model::t_avg() const {
    double sum = 0.0;
    for (const auto* l : registry_) sum += dynamic_ ? l->gate.active() : cfg_.max_steps;
    return sum / static_cast<double>(registry_.size());
}

void Model::project_gates() {
    if (!dynamic_) return;
    for (auto* l : registry_) l->gate.project();
}

namespace {
Shape conv_out_shape(const Shape& in, const Tensor& w, int stride, int padding) {
    const int64_t ho = (in[2] + 2 * padding - w.shape()[2]) / stride + 1;
    const int64_t wo = (in[3] + 2 * padding - w.shape()[3]) / stride + 1;
    return {in[0], w.shape()[0], ho, wo};
}

double count_nonzero(const Tensor& t) {
    double n = 0;
    for (float v : t.values())
        if (v != 0.0f) n += 1;
    return n;
}
} // namespace

Model::Seq Model::masked_lif_train(MaskedLif& l, const std::vector<Tensor>& drive) {
    const int T = cfg_.max_steps;
    auto spikes = lif_forward(drive, l.lif);
    Seq out;
    out.live.assign(static_cast<size_t>(T), 1);
    if (!dynamic_) {
        out.step = std::move(spikes);
        l.fwd_mask = Tensor();
        return out;
    }
    Tensor ts = step_scores(l.gate.params());
    Tensor tm = step_mask_of(ts);
    l.fwd_mask = tm;
    out.step.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) out.step.push_back(scale_by_entry(spikes[static_cast<size_t>(t)], tm, t));
    return out;
}

Model::Seq Model::masked_lif_eval(MaskedLif& l, const std::vector<Tensor>& drive, const std::string& name,
                                  Probe* probe) {
    const int T = cfg_.max_steps;
    const int act = dynamic_ ? l.gate.active() : T;
    const Shape& s = drive[0].shape();
    Seq out;
    out.step.resize(static_cast<size_t>(T));
    out.live.assign(static_cast<size_t>(T), 0);
    Tensor u;
    for (int t = 0; t < act; ++t) {
        Tensor h = t == 0 ? drive[static_cast<size_t>(t)]
                          : add(scale(u, l.lif.leak), drive[static_cast<size_t>(t)]);
        Tensor o = spike_threshold(h, l.lif.v_threshold, l.lif.gamma);
        u = sub(h, o);
        out.step[static_cast<size_t>(t)] = std::move(o);
        out.live[static_cast<size_t>(t)] = 1;
    }
    for (int t = act; t < T; ++t) out.step[static_cast<size_t>(t)] = Tensor::zeros(s);
    if (probe) {
        const double batch = static_cast<double>(s[0]);
        const double neurons = static_cast<double>(shape_numel(s)) / batch;
        ProbeLif& pl = probe->lifs[probe->lif(name, neurons, act, T)];
        pl.spike_slots += neurons * act * batch;
        for (int t = 0; t < act; ++t) pl.spikes += count_nonzero(out.step[static_cast<size_t>(t)]);
        if (probe->record_drives)
            for (int t = 0; t < T; ++t) {
                auto vals = drive[static_cast<size_t>(t)].values();
                pl.drive[static_cast<size_t>(t)].insert(pl.drive[static_cast<size_t>(t)].end(),
                                                        vals.begin(), vals.end());
            }
    }
    return out;
}

Model::Seq Model::conv_bn_lif(const std::string& name, ConvUnit& u, MaskedLif& l, const Seq& in,
                              bool embedding, Probe* probe) {
    const int T = cfg_.max_steps;
    GradTape* tape = GradTape::current();
    if (tape) tape->set_context(name);
    Seq out;
    if (training_) {
        Tensor pre;
        if (embedding) {
            // direct encoding presents the same image at every step, so the
            // embedding conv runs once and its output is tiled over time
            Tensor once = conv2d(in.step[0], u.w, u.stride, u.padding);
            pre = concat0(std::vector<Tensor>(static_cast<size_t>(T), once));
        } else {
            pre = conv2d(concat0(in.step), u.w, u.stride, u.padding);
        }
        Tensor drv = batchnorm(pre, u.bn_gamma, u.bn_beta, u.bn, true);
        out = masked_lif_train(l, split0(drv, T));
    } else {
        const Shape oshape = conv_out_shape(in.step[0].shape(), u.w, u.stride, u.padding);
        const int act = dynamic_ ? l.gate.active() : T;
        const bool want_all = probe != nullptr;
        size_t poi = 0;
        double in_slots = 0, dense = 0;
        if (probe) {
            const Shape& is = in.step[0].shape();
            in_slots = static_cast<double>(shape_numel(is)) / static_cast<double>(is[0]);
            dense = static_cast<double>(oshape[1] * oshape[2] * oshape[3]) *
                    static_cast<double>(u.w.shape()[1] * u.w.shape()[2] * u.w.shape()[3]);
            poi = probe->op(name + ".conv", !embedding, dense, in_slots);
        }
        std::vector<Tensor> drv(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t) {
            if (t >= act && !want_all) continue;
            Tensor pre = in.live[static_cast<size_t>(t)]
                             ? conv2d(in.step[static_cast<size_t>(t)], u.w, u.stride, u.padding)
                             : Tensor::zeros(oshape);
            drv[static_cast<size_t>(t)] = batchnorm(pre, u.bn_gamma, u.bn_beta, u.bn, false);
            if (probe && !embedding && in.live[static_cast<size_t>(t)]) {
                ProbeOp& po = probe->ops[poi];
                const double batch = static_cast<double>(oshape[0]);
                const double nz = count_nonzero(in.step[static_cast<size_t>(t)]);
                po.executed_step_samples += batch;
                po.input_nonzero += nz;
                po.presented_slots += in_slots * batch;
                po.sops += dense * nz / in_slots;
            }
        }
        for (int t = act; t < T; ++t)
            if (!drv[static_cast<size_t>(t)].defined()) drv[static_cast<size_t>(t)] = Tensor::zeros(oshape);
        out = masked_lif_eval(l, drv, name, probe);
    }
    if (tape) tape->set_context("");
    return out;
}

Model::Seq Model::lif_only(const std::string& name, MaskedLif& l, const Seq& in, Probe* probe) {
    GradTape* tape = GradTape::current();
    if (tape) tape->set_context(name);
    Seq out = training_ ? masked_lif_train(l, in.step) : masked_lif_eval(l, in.step, name, probe);
    if (tape) tape->set_context("");
    return out;
}

Model::Seq Model::attention(Block&, const Seq& q, const Seq& k, const Seq& v, Probe* probe,
                            const std::string& name) {
    const int T = cfg_.max_steps;
    GradTape* tape = GradTape::current();
    if (tape) tape->set_context(name);
    const Shape& s = q.step[0].shape(); // [B, D, h, w]
    const int64_t B = s[0], D = s[1], N = s[2] * s[3];
    const int64_t heads = cfg_.heads, dh = D / heads;

    size_t pqk = 0, pav = 0;
    if (probe) {
        const double dense = static_cast<double>(heads * N * N * dh);
        const double slots = static_cast<double>(D * N);
        pqk = probe->op(name + ".qk", true, dense, slots);
        pav = probe->op(name + ".av", true, dense, slots);
    }

    Seq out;
    out.step.resize(static_cast<size_t>(T));
    out.live.assign(static_cast<size_t>(T), 0);
    for (int t = 0; t < T; ++t) {
        const size_t ti = static_cast<size_t>(t);
        const bool qk_live = q.live[ti] && k.live[ti];
        const bool av_live = qk_live && v.live[ti];
        if (!training_ && !av_live) {
            // skipped product; attention output is exactly zero at this step
            if (probe && qk_live) {
                ProbeOp& po = probe->ops[pqk];
                const double nz = count_nonzero(q.step[ti]);
                po.executed_step_samples += static_cast<double>(B);
                po.input_nonzero += nz;
                po.presented_slots += static_cast<double>(D * N) * static_cast<double>(B);
                po.sops += static_cast<double>(heads * N * N * dh) * nz / static_cast<double>(D * N);
            }
            out.step[ti] = Tensor::zeros(s);
            continue;
        }
        GradTape* tape = GradTape::current();
        Tensor qh = reshape(q.step[ti], {B, heads, dh, N});
        Tensor kh = reshape(k.step[ti], {B, heads, dh, N});
        Tensor vh = reshape(v.step[ti], {B, heads, dh, N});
        Tensor qp = permute(qh, {0, 1, 3, 2});
        if (tape) tape->set_context(name + ".qk");
        Tensor qk = matmul(qp, kh); // [B, heads, N, N]
        if (tape) tape->set_context(name + ".av");
        Tensor av = matmul(qk, permute(vh, {0, 1, 3, 2})); // [B, heads, N, dh]
        if (tape) tape->set_context(name);
        Tensor scaled = scale(av, cfg_.attn_scale);
        out.step[ti] = reshape(permute(scaled, {0, 1, 3, 2}), s);
        out.live[ti] = 1;
        if (!training_ && probe) {
            const double batch = static_cast<double>(B);
            const double slots = static_cast<double>(D * N);
            const double dense = static_cast<double>(heads * N * N * dh);
            const double nzq = count_nonzero(q.step[ti]);
            ProbeOp& oqk = probe->ops[pqk];
            oqk.executed_step_samples += batch;
            oqk.input_nonzero += nzq;
            oqk.presented_slots += slots * batch;
            oqk.sops += dense * nzq / slots;
            const double nzv = count_nonzero(v.step[ti]);
            ProbeOp& oav = probe->ops[pav];
            oav.executed_step_samples += batch;
            oav.input_nonzero += nzv;
            oav.presented_slots += slots * batch;
            oav.sops += dense * nzv / slots;
            oav.output_nonzero += count_nonzero(scaled);
        }
    }
    if (tape) tape->set_context("");
    return out;
}

Tensor Model::forward(const Tensor& images, Probe* probe) {
    if (images.ndim() != 4 || images.dim(1) != cfg_.in_channels || images.dim(2) != cfg_.image_size ||
        images.dim(3) != cfg_.image_size)
        throw DimensionError("forward: image batch " + shape_str(images.shape()) + " does not match model " +
                             std::to_string(cfg_.in_channels) + "x" + std::to_string(cfg_.image_size) + "x" +
                             std::to_string(cfg_.image_size));
    if (training_ && probe) throw InvariantError("forward: probing requires eval mode");
    const int T = cfg_.max_steps;
    if (probe) probe->begin_batch(static_cast<double>(images.dim(0)));

    Seq x;
    x.step.assign(static_cast<size_t>(T), images);
    x.live.assign(static_cast<size_t>(T), 1);
    for (size_t i = 0; i < sps_.size(); ++i) {
        const std::string name = "sps" + std::to_string(i);
        x = conv_bn_lif(name, sps_[i].conv, sps_[i].lif, x, i == 0, probe);
    }
    for (size_t bi = 0; bi < blocks_.size(); ++bi) {
        Block& b = blocks_[bi];
        const std::string bn = "block" + std::to_string(bi);
        Seq q = conv_bn_lif(bn + ".q", b.q, b.q_lif, x, false, probe);
        Seq k = conv_bn_lif(bn + ".k", b.k, b.k_lif, x, false, probe);
        Seq v = conv_bn_lif(bn + ".v", b.v, b.v_lif, x, false, probe);
        Seq att = attention(b, q, k, v, probe, bn + ".attn");
        Seq sa = lif_only(bn + ".attn", b.attn_lif, att, probe);
        Seq p = conv_bn_lif(bn + ".proj", b.proj, b.proj_lif, sa, false, probe);
        GradTape* tape = GradTape::current();
        if (tape) tape->set_context(bn + ".res1");
        Seq r1;
        r1.step.resize(static_cast<size_t>(T));
        r1.live.assign(static_cast<size_t>(T), 0);
        for (int t = 0; t < T; ++t) {
            r1.step[static_cast<size_t>(t)] = add(x.step[static_cast<size_t>(t)], p.step[static_cast<size_t>(t)]);
            r1.live[static_cast<size_t>(t)] = x.live[static_cast<size_t>(t)] || p.live[static_cast<size_t>(t)];
        }
        if (tape) tape->set_context("");
        Seq h1 = conv_bn_lif(bn + ".mlp1", b.fc1, b.fc1_lif, r1, false, probe);
        Seq h2 = conv_bn_lif(bn + ".mlp2", b.fc2, b.fc2_lif, h1, false, probe);
        if (tape) tape->set_context(bn + ".res2");
        x.step.resize(static_cast<size_t>(T));
        x.live.assign(static_cast<size_t>(T), 0);
        for (int t = 0; t < T; ++t) {
            x.step[static_cast<size_t>(t)] = add(r1.step[static_cast<size_t>(t)], h2.step[static_cast<size_t>(t)]);
            x.live[static_cast<size_t>(t)] = r1.live[static_cast<size_t>(t)] || h2.live[static_cast<size_t>(t)];
        }
        if (tape) tape->set_context("");
    }

    GradTape* tape = GradTape::current();
    if (tape) tape->set_context("head");
    const int act = dynamic_ ? registry_.back()->gate.active() : T;
    const int64_t B = images.dim(0);
    Tensor feat;
    if (act == 0) {
        feat = Tensor::zeros({B, cfg_.embed_dim});
    } else {
        Tensor acc = mean_spatial(x.step[0]);
        for (int t = 1; t < act; ++t) acc = add(acc, mean_spatial(x.step[static_cast<size_t>(t)]));
        feat = act > 1 ? scale(acc, 1.0f / static_cast<float>(act)) : acc;
    }
    Tensor logits = matmul(feat, head_w_);
    if (tape) tape->set_context("");
    return logits;
}

} // namespace dts
