#include "dtspike/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dts {

void DataConfig::validate() const {
    if (kind != "synthetic" && kind != "cifar10")
        throw ConfigError("data config: kind must be 'synthetic' or 'cifar10', got '" + kind + "'");
    if (samples_per_class < 1) throw ConfigError("data config: samples_per_class must be >= 1");
    if (eval_samples_per_class < 1) throw ConfigError("data config: eval_samples_per_class must be >= 1");
    if (noise < 0.0f) throw ConfigError("data config: noise must be >= 0");
}

void ProfileConfig::validate() const {
    energy.validate();
    if (histogram_bins < 1) throw ConfigError("profile config: histogram_bins must be >= 1");
    if (sample_limit < 1) throw ConfigError("profile config: sample_limit must be >= 1");
}

void ExperimentConfig::validate() const {
    model.validate();
    train.validate(model.max_steps);
    profile.validate();
    data.validate();
}

std::pair<Dataset, Dataset> ExperimentConfig::load_datasets() const {
    if (data.kind == "cifar10") {
        if (data.path.empty()) throw ConfigError("data config: cifar10 requires a path");
        return load_cifar10(data.path, model.image_size);
    }
    SyntheticSpec spec;
    spec.seed = data.seed;
    spec.num_classes = model.num_classes;
    spec.image_size = model.image_size;
    spec.noise = data.noise;
    spec.per_class = data.samples_per_class;
    spec.stream = "data.synthetic.train";
    Dataset train = make_synthetic(spec);
    spec.per_class = data.eval_samples_per_class;
    spec.stream = "data.synthetic.eval";
    Dataset eval_set = make_synthetic(spec);
    return {std::move(train), std::move(eval_set)};
}

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

struct KeyParser {
    std::function<void(const std::string&)> set;
};

[[noreturn]] void line_error(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

int64_t parse_int(const std::string& v, int line) {
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') line_error(line, "expected an integer, got '" + v + "'");
    return x;
}

double parse_float(const std::string& v, int line) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') line_error(line, "expected a number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    line_error(line, "expected true/false, got '" + v + "'");
}

std::set<LayerGroup> parse_groups(const std::string& v, int line) {
    std::set<LayerGroup> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        auto g = layer_group_from(item);
        if (!g) line_error(line, "unknown layer group '" + item + "' (want sps, qkv, attn, mlp)");
        out.insert(*g);
    }
    return out;
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    int cur_line = 0;

    using Setter = std::function<void(const std::string&, int)>;
    std::map<std::string, std::map<std::string, Setter>> keys;

    auto& m = cfg.model;
    keys["model"] = {
        {"blocks", [&](const std::string& v, int l) { m.blocks = static_cast<int>(parse_int(v, l)); }},
        {"embed_dim", [&](const std::string& v, int l) { m.embed_dim = static_cast<int>(parse_int(v, l)); }},
        {"heads", [&](const std::string& v, int l) { m.heads = static_cast<int>(parse_int(v, l)); }},
        {"patch_size", [&](const std::string& v, int l) { m.patch_size = static_cast<int>(parse_int(v, l)); }},
        {"image_size", [&](const std::string& v, int l) { m.image_size = static_cast<int>(parse_int(v, l)); }},
        {"in_channels", [&](const std::string& v, int l) { m.in_channels = static_cast<int>(parse_int(v, l)); }},
        {"num_classes", [&](const std::string& v, int l) { m.num_classes = static_cast<int>(parse_int(v, l)); }},
        {"t_max", [&](const std::string& v, int l) { m.max_steps = static_cast<int>(parse_int(v, l)); }},
        {"attn_scale", [&](const std::string& v, int l) { m.attn_scale = static_cast<float>(parse_float(v, l)); }},
        {"sps_stages", [&](const std::string& v, int l) { m.sps_stages = static_cast<int>(parse_int(v, l)); }},
        {"mlp_ratio", [&](const std::string& v, int l) { m.mlp_ratio = static_cast<int>(parse_int(v, l)); }},
        {"leak", [&](const std::string& v, int l) { m.lif.leak = static_cast<float>(parse_float(v, l)); }},
        {"v_threshold",
         [&](const std::string& v, int l) { m.lif.v_threshold = static_cast<float>(parse_float(v, l)); }},
        {"surrogate_gamma",
         [&](const std::string& v, int l) { m.lif.gamma = static_cast<float>(parse_float(v, l)); }},
    };
    auto& t = cfg.train;
    keys["train"] = {
        {"lambda_m", [&](const std::string& v, int l) { t.lambda_m = static_cast<float>(parse_float(v, l)); }},
        {"mask_groups", [&](const std::string& v, int l) { t.mask_groups = parse_groups(v, l); }},
        {"t_init", [&](const std::string& v, int l) { t.t_init = static_cast<int>(parse_int(v, l)); }},
        {"epochs", [&](const std::string& v, int l) { t.epochs = static_cast<int>(parse_int(v, l)); }},
        {"batch_size", [&](const std::string& v, int l) { t.batch_size = static_cast<int>(parse_int(v, l)); }},
        {"learning_rate",
         [&](const std::string& v, int l) { t.learning_rate = static_cast<float>(parse_float(v, l)); }},
        {"lr_schedule",
         [&](const std::string& v, int l) {
             if (v == "constant")
                 t.cosine_lr = false;
             else if (v == "cosine")
                 t.cosine_lr = true;
             else
                 line_error(l, "lr_schedule must be 'constant' or 'cosine'");
         }},
        {"weight_decay",
         [&](const std::string& v, int l) { t.weight_decay = static_cast<float>(parse_float(v, l)); }},
        {"beta1", [&](const std::string& v, int l) { t.beta1 = static_cast<float>(parse_float(v, l)); }},
        {"beta2", [&](const std::string& v, int l) { t.beta2 = static_cast<float>(parse_float(v, l)); }},
        {"adam_eps", [&](const std::string& v, int l) { t.adam_eps = static_cast<float>(parse_float(v, l)); }},
        {"seed", [&](const std::string& v, int l) { t.seed = static_cast<uint64_t>(parse_int(v, l)); }},
        {"augment_hflip", [&](const std::string& v, int l) { t.augment_hflip = parse_bool(v, l); }},
        {"augment_crop", [&](const std::string& v, int l) { t.augment_crop = parse_bool(v, l); }},
    };
    auto& p = cfg.profile;
    keys["profile"] = {
        {"e_ac_pj", [&](const std::string& v, int l) { p.energy.e_ac_pj = parse_float(v, l); }},
        {"e_mac_pj", [&](const std::string& v, int l) { p.energy.e_mac_pj = parse_float(v, l); }},
        {"e_check_pj", [&](const std::string& v, int l) { p.energy.e_check_pj = parse_float(v, l); }},
        {"e_mem_pj", [&](const std::string& v, int l) { p.energy.e_mem_pj = parse_float(v, l); }},
        {"histogram_bins",
         [&](const std::string& v, int l) { p.histogram_bins = static_cast<int>(parse_int(v, l)); }},
        {"sample_limit",
         [&](const std::string& v, int l) { p.sample_limit = static_cast<int>(parse_int(v, l)); }},
    };
    auto& d = cfg.data;
    keys["data"] = {
        {"kind", [&](const std::string& v, int) { d.kind = v; }},
        {"path", [&](const std::string& v, int) { d.path = v; }},
        {"seed", [&](const std::string& v, int l) { d.seed = static_cast<uint64_t>(parse_int(v, l)); }},
        {"samples_per_class",
         [&](const std::string& v, int l) { d.samples_per_class = static_cast<int>(parse_int(v, l)); }},
        {"eval_samples_per_class",
         [&](const std::string& v, int l) { d.eval_samples_per_class = static_cast<int>(parse_int(v, l)); }},
        {"noise", [&](const std::string& v, int l) { d.noise = static_cast<float>(parse_float(v, l)); }},
    };

    std::string section;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++cur_line;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') line_error(cur_line, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!keys.count(section)) line_error(cur_line, "unknown section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) line_error(cur_line, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) line_error(cur_line, "key '" + key + "' outside any section");
        auto& sec = keys[section];
        auto it = sec.find(key);
        if (it == sec.end()) line_error(cur_line, "unknown key '" + key + "' in section [" + section + "]");
        it->second(value, cur_line);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_experiment_config(text);
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
    char buf[128];
    std::string out;
    auto kv_f = [&](const char* k, double v) {
        std::snprintf(buf, sizeof(buf), "%s = %.9g\n", k, v);
        out += buf;
    };
    auto kv_i = [&](const char* k, int64_t v) {
        std::snprintf(buf, sizeof(buf), "%s = %lld\n", k, static_cast<long long>(v));
        out += buf;
    };
    out += "[model]\n";
    kv_i("blocks", cfg.model.blocks);
    kv_i("embed_dim", cfg.model.embed_dim);
    kv_i("heads", cfg.model.heads);
    kv_i("patch_size", cfg.model.patch_size);
    kv_i("image_size", cfg.model.image_size);
    kv_i("in_channels", cfg.model.in_channels);
    kv_i("num_classes", cfg.model.num_classes);
    kv_i("t_max", cfg.model.max_steps);
    kv_f("attn_scale", cfg.model.attn_scale);
    kv_i("sps_stages", cfg.model.sps_stages);
    kv_i("mlp_ratio", cfg.model.mlp_ratio);
    kv_f("leak", cfg.model.lif.leak);
    kv_f("v_threshold", cfg.model.lif.v_threshold);
    kv_f("surrogate_gamma", cfg.model.lif.gamma);
    out += "\n[train]\n";
    kv_f("lambda_m", cfg.train.lambda_m);
    std::string groups;
    for (auto g : cfg.train.mask_groups) {
        if (!groups.empty()) groups += ",";
        groups += to_string(g);
    }
    out += "mask_groups = " + groups + "\n";
    kv_i("t_init", cfg.train.t_init);
    kv_i("epochs", cfg.train.epochs);
    kv_i("batch_size", cfg.train.batch_size);
    kv_f("learning_rate", cfg.train.learning_rate);
    out += std::string("lr_schedule = ") + (cfg.train.cosine_lr ? "cosine" : "constant") + "\n";
    kv_f("weight_decay", cfg.train.weight_decay);
    kv_f("beta1", cfg.train.beta1);
    kv_f("beta2", cfg.train.beta2);
    kv_f("adam_eps", cfg.train.adam_eps);
    kv_i("seed", static_cast<int64_t>(cfg.train.seed));
    out += std::string("augment_hflip = ") + (cfg.train.augment_hflip ? "true" : "false") + "\n";
    out += std::string("augment_crop = ") + (cfg.train.augment_crop ? "true" : "false") + "\n";
    out += "\n[profile]\n";
    kv_f("e_ac_pj", cfg.profile.energy.e_ac_pj);
    kv_f("e_mac_pj", cfg.profile.energy.e_mac_pj);
    kv_f("e_check_pj", cfg.profile.energy.e_check_pj);
    kv_f("e_mem_pj", cfg.profile.energy.e_mem_pj);
    kv_i("histogram_bins", cfg.profile.histogram_bins);
    kv_i("sample_limit", cfg.profile.sample_limit);
    out += "\n[data]\n";
    out += "kind = " + cfg.data.kind + "\n";
    if (!cfg.data.path.empty()) out += "path = " + cfg.data.path + "\n";
    kv_i("seed", static_cast<int64_t>(cfg.data.seed));
    kv_i("samples_per_class", cfg.data.samples_per_class);
    kv_i("eval_samples_per_class", cfg.data.eval_samples_per_class);
    kv_f("noise", cfg.data.noise);
    return out;
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp);
        out << serialize_experiment_config(cfg);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace dts
