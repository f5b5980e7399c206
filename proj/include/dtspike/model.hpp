#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtspike/lif.hpp"
#include "dtspike/ops.hpp"
#include "dtspike/probe.hpp"
#include "dtspike/stepmask.hpp"

namespace dts {

enum class LayerGroup { sps, qkv, attn, mlp };

const char* to_string(LayerGroup g);
std::optional<LayerGroup> layer_group_from(const std::string& s);

struct ModelConfig {
    int blocks = 1;
    int embed_dim = 32;
    int heads = 2;
    int patch_size = 4;
    int image_size = 16;
    int in_channels = 1;
    int num_classes = 10;
    int max_steps = 4;
    float attn_scale = 0.125f;
    int sps_stages = 2;
    int mlp_ratio = 4;
    LifConfig lif;
    std::map<LayerGroup, LifConfig> lif_overrides;

    void validate() const;            // throws ConfigError naming the violated constraint
    uint64_t digest() const;          // stable architecture hash, checked on checkpoint load
    std::string arch_name() const;    // spikformer-<blocks>-<embed_dim>
    int tokens_per_side() const { return image_size / patch_size; }
    int tokens() const { return tokens_per_side() * tokens_per_side(); }
    LifConfig lif_for(LayerGroup g) const;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// One LIF layer plus its trainable time-step gate and group tag.
struct MaskedLif {
    std::string name;
    LayerGroup group = LayerGroup::sps;
    LifConfig lif;
    StepMask gate;
    Tensor fwd_mask; // mask node recorded by the last training forward
};

class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed, int init_steps = -1, bool dynamic_masks = true);

    // the layer registry points into the stage/block vectors, which survive a
    // move (the buffers transfer) but not a copy
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    // [B, C, H, W] -> [B, num_classes]; training mode computes every step and
    // masks afterwards, eval mode skips dot products at mask-dead steps
    Tensor forward(const Tensor& images, Probe* probe = nullptr);

    void set_training(bool t) { training_ = t; }
    bool training() const { return training_; }
    bool dynamic_masks() const { return dynamic_; }

    double t_avg() const;

    std::vector<MaskedLif*>& masked_layers() { return registry_; }
    const std::vector<MaskedLif*>& masked_layers() const { return registry_; }

    std::vector<NamedTensor>& parameters() { return params_; }
    // parameters plus batchnorm running stats; everything a checkpoint carries
    std::vector<NamedTensor> state_tensors();

    const ModelConfig& config() const { return cfg_; }
    int init_steps() const { return init_steps_; }

    void project_gates();

private:
    struct ConvUnit {
        Tensor w;
        int stride = 1, padding = 0;
        Tensor bn_gamma, bn_beta;
        BatchNormState bn;
    };
    struct SpsStage {
        ConvUnit conv;
        MaskedLif lif;
    };
    struct Block {
        ConvUnit q, k, v, proj, fc1, fc2;
        MaskedLif q_lif, k_lif, v_lif, attn_lif, proj_lif, fc1_lif, fc2_lif;
    };
    struct Seq {
        std::vector<Tensor> step;
        std::vector<char> live; // mask-known activity; a dead step is an exact-zero tensor
    };

    ConvUnit make_conv(const std::string& name, int cin, int cout, int k, int stride, int padding);
    MaskedLif make_lif(const std::string& name, LayerGroup group);
    void register_unit(ConvUnit& u, MaskedLif& l);

    Seq conv_bn_lif(const std::string& name, ConvUnit& u, MaskedLif& l, const Seq& in, bool embedding,
                    Probe* probe);
    Seq lif_only(const std::string& name, MaskedLif& l, const Seq& in, Probe* probe);
    Seq masked_lif_train(MaskedLif& l, const std::vector<Tensor>& drive);
    Seq masked_lif_eval(MaskedLif& l, const std::vector<Tensor>& drive, const std::string& name,
                        Probe* probe);
    Seq attention(Block& b, const Seq& q, const Seq& k, const Seq& v, Probe* probe,
                  const std::string& name);

    ModelConfig cfg_;
    bool training_ = true;
    bool dynamic_ = true;
    int init_steps_ = 1;

    std::vector<SpsStage> sps_;
    std::vector<Block> blocks_;
    Tensor head_w_;

    std::vector<MaskedLif*> registry_;
    std::vector<NamedTensor> params_;
    std::vector<NamedTensor> buffers_;
};

} // namespace dts
