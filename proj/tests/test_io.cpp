#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dtspike/checkpoint.hpp"
#include "dtspike/config.hpp"
#include "oracles.hpp"

using namespace dts;

namespace {
std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}
} // namespace

TEST_CASE("minimal config applies every documented default") {
    ExperimentConfig cfg = parse_experiment_config("[data]\nkind = synthetic\n");
    CHECK(cfg.model.blocks == 1);
    CHECK(cfg.model.embed_dim == 32);
    CHECK(cfg.model.max_steps == 4);
    CHECK(cfg.model.attn_scale == 0.125f);
    CHECK(cfg.train.lambda_m == 1e-6f);
    CHECK(cfg.train.mask_groups == std::set<LayerGroup>{LayerGroup::qkv, LayerGroup::mlp});
    CHECK(cfg.train.resolved_t_init(cfg.model.max_steps) == 2);
    CHECK(cfg.train.learning_rate == 0.004f);
    CHECK(cfg.train.weight_decay == 0.02f);
    CHECK(cfg.profile.energy.e_ac_pj == 1.8);
    CHECK(cfg.profile.energy.e_mac_pj == 13.32);
    CHECK(cfg.profile.energy.e_check_pj == 0.05);
    CHECK(cfg.profile.histogram_bins == 64);
    CHECK(cfg.data.kind == "synthetic");
}

TEST_CASE("config rejections carry the field or line") {
    CHECK_THROWS_WITH_AS(parse_experiment_config("[train]\nt_init = 9\n"), doctest::Contains("t_init"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config("[train]\nnot_a_key = 1\n"),
                         doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config("[nope]\n"), doctest::Contains("nope"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("key_outside = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("[model]\nheads = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("[data]\nkind = tarot\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("[train]\nmask_groups = qkv,huh\n"), ConfigError);
}

TEST_CASE("config round-trips exactly, including lambda_m = 1e-6") {
    ExperimentConfig cfg;
    cfg.train.lambda_m = 1e-6f;
    cfg.train.mask_groups = {LayerGroup::qkv};
    cfg.model.embed_dim = 48;
    cfg.model.heads = 3;
    cfg.data.noise = 0.123f;
    std::string text = serialize_experiment_config(cfg);
    ExperimentConfig back = parse_experiment_config(text);
    CHECK(back.train.lambda_m == cfg.train.lambda_m);
    CHECK(back.model.embed_dim == 48);
    CHECK(back.train.mask_groups == cfg.train.mask_groups);
    CHECK(back.data.noise == cfg.data.noise);
    CHECK(serialize_experiment_config(back) == text);
}

TEST_CASE("checkpoint round trip is byte identical and digest guarded") {
    const auto tmp = std::filesystem::temp_directory_path() / "dtspike_io_test";
    std::filesystem::create_directories(tmp);

    ModelConfig mc;
    mc.embed_dim = 16;
    mc.heads = 2;
    mc.image_size = 8;
    mc.num_classes = 4;
    Model m1(mc, 7, 2);
    AdamW opt({m1.parameters()[0].tensor}, {});
    const std::string p1 = (tmp / "a.dtss").string();
    const std::string p2 = (tmp / "b.dtss").string();
    save_checkpoint(p1, m1, &opt);

    Model m2(mc, 99, 2); // different weights until loaded
    AdamW opt2({m2.parameters()[0].tensor}, {});
    load_checkpoint(p1, m2, &opt2);
    for (size_t i = 0; i < m1.parameters().size(); ++i) {
        auto a = m1.parameters()[i].tensor.values();
        auto b = m2.parameters()[i].tensor.values();
        REQUIRE(a.size() == b.size());
        for (size_t j = 0; j < a.size(); ++j) REQUIRE(a[j] == b[j]);
    }
    save_checkpoint(p2, m2, &opt2);
    CHECK(read_file(p1) == read_file(p2));

    // wrong architecture refuses to load
    ModelConfig other = mc;
    other.embed_dim = 32;
    Model m3(other, 7, 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(p1, m3), doctest::Contains("digest"), FormatError);

    // corrupted magic refuses to load
    std::string bytes = read_file(p1);
    bytes[0] = 'X';
    write_file((tmp / "bad.dtss").string(), bytes);
    CHECK_THROWS_AS(load_checkpoint((tmp / "bad.dtss").string(), m2), FormatError);

    std::filesystem::remove_all(tmp);
}

TEST_CASE("synthetic dataset: balance and bitwise reproducibility") {
    SyntheticSpec spec;
    spec.seed = 123;
    spec.num_classes = 6;
    spec.per_class = 9;
    Dataset a = make_synthetic(spec);
    Dataset b = make_synthetic(spec);
    REQUIRE(a.size() == 54);
    std::vector<int> counts(6, 0);
    for (int l : a.labels) counts[static_cast<size_t>(l)]++;
    for (int c : counts) CHECK(c == 9);
    REQUIRE(a.images.size() == b.images.size());
    for (size_t i = 0; i < a.images.size(); ++i) REQUIRE(a.images[i] == b.images[i]);

    spec.seed = 124;
    Dataset c = make_synthetic(spec);
    bool differs = false;
    for (size_t i = 0; i < a.images.size(); ++i) differs = differs || a.images[i] != c.images[i];
    CHECK(differs);
}

TEST_CASE("cifar batches: records, scaling, pooling, and format errors") {
    const auto tmp = std::filesystem::temp_directory_path() / "dtspike_cifar_test";
    std::filesystem::create_directories(tmp);

    // two crafted records: label 3 with all-255 pixels, label 7 with all-zero
    std::string rec(3073, '\0');
    rec[0] = 3;
    for (size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<char>(255);
    std::string rec2(3073, '\0');
    rec2[0] = 7;
    const std::string file = (tmp / "batch.bin").string();
    write_file(file, rec + rec2);

    Dataset ds = load_cifar10_file(file, 32);
    REQUIRE(ds.size() == 2);
    CHECK(ds.labels[0] == 3);
    CHECK(ds.labels[1] == 7);
    CHECK(ds.image(0)[0] == 1.0f); // byte 255 -> 1.0
    CHECK(ds.image(1)[0] == 0.0f);

    Dataset half = load_cifar10_file(file, 16); // average pooling of constants
    CHECK(half.image_size == 16);
    CHECK(half.image(0)[0] == 1.0f);
    CHECK(half.image(1)[5] == 0.0f);

    // truncated file names the record size
    write_file((tmp / "trunc.bin").string(), rec.substr(0, 3000));
    CHECK_THROWS_WITH_AS(load_cifar10_file((tmp / "trunc.bin").string(), 32),
                         doctest::Contains("3073"), FormatError);

    // full directory layout
    for (int i = 1; i <= 5; ++i)
        write_file((tmp / ("data_batch_" + std::to_string(i) + ".bin")).string(), rec + rec2);
    write_file((tmp / "test_batch.bin").string(), rec2);
    auto [train, test] = load_cifar10(tmp.string(), 32);
    CHECK(train.size() == 10);
    CHECK(test.size() == 1);

    CHECK_THROWS_AS(load_cifar10_file(file, 7), ConfigError);
    std::filesystem::remove_all(tmp);
}

TEST_CASE("a full-size synthetic batch file loads 10000 records") {
    // record-count arithmetic on a 10000-record file (10000 x 3073 bytes)
    const auto tmp = std::filesystem::temp_directory_path() / "dtspike_cifar_full";
    std::filesystem::create_directories(tmp);
    std::string contents;
    contents.reserve(10000 * 3073);
    std::string rec(3073, '\0');
    for (int i = 0; i < 10000; ++i) {
        rec[0] = static_cast<char>(i % 10);
        contents += rec;
    }
    const std::string file = (tmp / "full.bin").string();
    write_file(file, contents);
    Dataset ds = load_cifar10_file(file, 32);
    CHECK(ds.size() == 10000);
    for (int l : ds.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l < 10);
    }
    std::filesystem::remove_all(tmp);
}

TEST_CASE("metrics csv header matches the interface") {
    const auto tmp = std::filesystem::temp_directory_path() / "dtspike_csv_test";
    std::filesystem::create_directories(tmp);
    EpochStats e;
    e.epoch = 0;
    e.train_loss = 1.5;
    write_metrics_csv((tmp / "m.csv").string(), {e});
    std::string text = read_file((tmp / "m.csv").string());
    CHECK(text.rfind("epoch,train_loss,train_acc,eval_acc,t_avg,sa_percent\n", 0) == 0);
    std::filesystem::remove_all(tmp);
}
