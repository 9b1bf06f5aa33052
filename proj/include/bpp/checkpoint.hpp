#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpp/model.hpp"

namespace bpp {

// Layout (little-endian):
//   "BPP1" | u32 version | u64 header_len | JSON header | tensor payloads
// The header carries config, meta and a tensor directory whose offsets are
// relative to the first payload byte.
inline constexpr char kCheckpointMagic[4] = {'B', 'P', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::string id;
    std::string parent;  // empty for a from-scratch run
    std::string stage = "stage1";  // tokens from {stage1, pruned, debias, finetuned} joined by "→"
    std::uint64_t epochs_trained = 0;
    std::uint64_t seed = 0;
    std::string loss = "l1";
    std::optional<double> best_val_psnr_y;

    bool operator==(const CheckpointMeta&) const = default;
};

struct NamedTensor {
    std::string name;
    TensorF tensor;
};

struct Checkpoint {
    ModelConfig config;
    std::vector<NamedTensor> tensors;  // layer order; biases stored as (1, Cout, 1, 1)
    CheckpointMeta meta;
};

void validate_stage_tag(const std::string& tag);

Checkpoint to_checkpoint(const Model& model, CheckpointMeta meta);
// Throws ConfigError if tensor names or shapes differ from the config inventory.
Model from_checkpoint(const Checkpoint& ckpt);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

struct PartialLoad {
    Model model;
    std::vector<std::string> copied;       // present in both with identical shape
    std::vector<std::string> initialized;  // fresh in the new model
    std::vector<std::string> dropped;      // only in the checkpoint
};

PartialLoad load_partial(const Checkpoint& ckpt, const ModelConfig& config, std::uint64_t seed);

}  // namespace bpp
