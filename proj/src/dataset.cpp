#include "dtspike/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dtspike/rng.hpp"

namespace dts {

Tensor Dataset::batch(std::span<const size_t> indices) const {
    const int64_t B = static_cast<int64_t>(indices.size());
    std::vector<float> buf;
    buf.reserve(static_cast<size_t>(B) * image_len());
    for (size_t idx : indices) {
        auto img = image(idx);
        buf.insert(buf.end(), img.begin(), img.end());
    }
    return Tensor::from({B, channels, image_size, image_size}, std::move(buf));
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw ConfigError("synthetic dataset: num_classes must be >= 2");
    if (spec.per_class < 1) throw ConfigError("synthetic dataset: per_class must be >= 1");
    if (spec.image_size < 4) throw ConfigError("synthetic dataset: image_size must be >= 4");

    Dataset ds;
    ds.image_size = spec.image_size;
    ds.channels = 1;
    ds.num_classes = spec.num_classes;
    const int S = spec.image_size;
    const float mid = static_cast<float>(S - 1) / 2.0f;
    const float width = 0.8f; // bar half-width profile

    Rng rng = derive_stream(spec.seed, spec.stream);
    ds.images.reserve(static_cast<size_t>(spec.num_classes) * spec.per_class * S * S);
    ds.labels.reserve(static_cast<size_t>(spec.num_classes) * spec.per_class);
    for (int rep = 0; rep < spec.per_class; ++rep) {
        for (int k = 0; k < spec.num_classes; ++k) {
            const float theta = 3.14159265358979323846f * static_cast<float>(k) /
                                static_cast<float>(spec.num_classes);
            const float cx = mid + 2.0f * (rng.uniform_f() - 0.5f);
            const float cy = mid + 2.0f * (rng.uniform_f() - 0.5f);
            const float nx = -std::sin(theta), ny = std::cos(theta);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const float d = (static_cast<float>(x) - cx) * nx + (static_cast<float>(y) - cy) * ny;
                    float v = std::exp(-d * d / (2.0f * width * width));
                    v += spec.noise * rng.normal_f();
                    ds.images.push_back(std::clamp(v, 0.0f, 1.0f));
                }
            ds.labels.push_back(k);
        }
    }
    return ds;
}

namespace {

constexpr size_t kCifarRecord = 3073; // 1 label byte + 3 * 32 * 32 pixels
constexpr int kCifarSide = 32;

void append_cifar_records(Dataset& ds, const std::string& path, int target_size) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open CIFAR-10 batch file " + path);
    const auto bytes = static_cast<size_t>(in.tellg());
    if (bytes == 0 || bytes % kCifarRecord != 0)
        throw FormatError("CIFAR-10 batch " + path + ": file length " + std::to_string(bytes) +
                          " is not a multiple of the " + std::to_string(kCifarRecord) +
                          "-byte record size (expected e.g. " + std::to_string(10000 * kCifarRecord) +
                          " bytes for a full batch)");
    in.seekg(0);
    const size_t records = bytes / kCifarRecord;
    const int pool = kCifarSide / target_size;
    std::vector<unsigned char> rec(kCifarRecord);
    for (size_t r = 0; r < records; ++r) {
        if (!in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size())))
            throw FormatError("CIFAR-10 batch " + path + ": truncated read");
        const int label = rec[0];
        if (label > 9)
            throw FormatError("CIFAR-10 batch " + path + ": label byte " + std::to_string(label) +
                              " outside [0, 10)");
        ds.labels.push_back(label);
        for (int c = 0; c < 3; ++c) {
            const unsigned char* plane = rec.data() + 1 + c * kCifarSide * kCifarSide;
            for (int oy = 0; oy < target_size; ++oy)
                for (int ox = 0; ox < target_size; ++ox) {
                    float acc = 0.0f;
                    for (int py = 0; py < pool; ++py)
                        for (int px = 0; px < pool; ++px)
                            acc += static_cast<float>(plane[(oy * pool + py) * kCifarSide + ox * pool + px]);
                    ds.images.push_back(acc / (255.0f * static_cast<float>(pool * pool)));
                }
        }
    }
}

} // namespace

Dataset load_cifar10_file(const std::string& path, int target_size) {
    if (target_size < 1 || kCifarSide % target_size != 0)
        throw ConfigError("CIFAR-10 target size " + std::to_string(target_size) + " must divide 32");
    Dataset ds;
    ds.image_size = target_size;
    ds.channels = 3;
    ds.num_classes = 10;
    append_cifar_records(ds, path, target_size);
    return ds;
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir, int target_size) {
    if (target_size < 1 || kCifarSide % target_size != 0)
        throw ConfigError("CIFAR-10 target size " + std::to_string(target_size) + " must divide 32");
    namespace fs = std::filesystem;
    Dataset train;
    train.image_size = target_size;
    train.channels = 3;
    train.num_classes = 10;
    for (int i = 1; i <= 5; ++i) {
        const std::string path = (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
        append_cifar_records(train, path, target_size);
    }
    Dataset test = load_cifar10_file((fs::path(dir) / "test_batch.bin").string(), target_size);
    return {std::move(train), std::move(test)};
}

} // namespace dts
