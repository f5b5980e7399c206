#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtspike/model.hpp"
#include "dtspike/optim.hpp"

namespace dts {

// On-disk format, little-endian throughout:
//   "DTSS" | u32 version | u64 model-config digest | u64 entry count | entries
// entry: u32 name length | UTF-8 name | u32 rank | u64 dims[rank] | f32 payload
// Optimizer moments ride along as "optim.*" entries when an optimizer is given.

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

std::string encode_checkpoint(uint64_t digest, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes, uint64_t* digest_out);

void save_checkpoint(const std::string& path, Model& model, const AdamW* opt = nullptr);
// refuses files whose digest does not match the model architecture
void load_checkpoint(const std::string& path, Model& model, AdamW* opt = nullptr);

} // namespace dts
