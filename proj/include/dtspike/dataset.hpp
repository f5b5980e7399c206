#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dtspike/tensor.hpp"

namespace dts {

struct Dataset {
    int image_size = 16;
    int channels = 1;
    int num_classes = 10;
    std::vector<float> images; // size() * channels * image_size^2, row-major
    std::vector<int> labels;

    size_t size() const { return labels.size(); }
    size_t image_len() const {
        return static_cast<size_t>(channels) * static_cast<size_t>(image_size) *
               static_cast<size_t>(image_size);
    }
    std::span<const float> image(size_t i) const {
        return {images.data() + i * image_len(), image_len()};
    }
    Tensor batch(std::span<const size_t> indices) const;
};

// Class-dependent oriented bars on a dark background with additive Gaussian
// noise. Same seed gives a bitwise-identical dataset; classes are exactly
// balanced and interleaved.
struct SyntheticSpec {
    uint64_t seed = 7;
    int num_classes = 10;
    int per_class = 50;
    int image_size = 16;
    float noise = 0.08f;
    std::string stream = "data.synthetic.train"; // PRNG consumer label
};
Dataset make_synthetic(const SyntheticSpec& spec);

// One CIFAR-10 binary batch file (records of 1 label byte + 3072 pixel bytes).
// Pixels scale to [0, 1]; target_size < 32 downscales by average pooling.
Dataset load_cifar10_file(const std::string& path, int target_size = 32);

// Standard directory layout: data_batch_1..5.bin for training, test_batch.bin
// for evaluation.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir, int target_size = 32);

} // namespace dts
