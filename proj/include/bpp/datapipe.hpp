#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpp/tensor.hpp"

namespace bpp {

// hr is (1, 3, H, W); lr is (1, 3, H/3, W/3) with even spatial dims.
struct ImagePair {
    TensorF hr;
    TensorF lr;
    std::string id;
    std::string source_hash;  // FNV-1a of the HR file bytes, hex; empty for in-memory pairs

    std::size_t byte_size() const { return (hr.numel() + lr.numel()) * sizeof(float); }
};

struct PatchBatch {
    TensorF lr;  // (B, 3, s, s)
    TensorF hr;  // (B, 3, 3s, 3s)
};

struct PrepareOptions {
    std::size_t scale = 3;
    int jpeg_q = 90;
    bool degrade = true;  // false: plain bicubic LR, no codec
    std::optional<std::filesystem::path> lr_dir;  // pre-degraded LR with matching filenames
    bool skip_unreadable = false;
};

// Crops HR so both LR dims are even, then LR = JPEG(bicubic_down(HR)).
ImagePair make_pair(const TensorF& hr, std::string id, const PrepareOptions& opts = {});

std::vector<ImagePair> prepare_pairs(const std::filesystem::path& hr_dir, const PrepareOptions& opts = {});

// Manifest rows: id, HR and LR dims, source hash.
nlohmann::json manifest(std::span<const ImagePair> pairs);

// In-memory dataset; sampling from it performs no file I/O.
class MemoryCache {
public:
    MemoryCache() = default;
    explicit MemoryCache(std::vector<ImagePair> pairs);

    std::span<const ImagePair> pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }
    std::size_t byte_size() const { return bytes_; }

private:
    std::vector<ImagePair> pairs_;
    std::size_t bytes_ = 0;
};

MemoryCache preload(std::vector<ImagePair> pairs);

using Rng = std::mt19937_64;

// Eight dihedral transforms: rotation k*90 degrees (k = t % 4) after an
// optional horizontal flip (t >= 4). Applied to a square (1, C, s, s) patch.
TensorF dihedral(const TensorF& patch, int t);

PatchBatch sample_batch(std::span<const ImagePair> pairs, std::size_t batch, std::size_t patch_lr, Rng& rng);
PatchBatch sample_batch(const MemoryCache& cache, std::size_t batch, std::size_t patch_lr, Rng& rng);

// Crop (1, C, H, W) -> (1, C, h, w) at (y, x).
TensorF crop(const TensorF& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w);

std::string fnv1a_hex(std::span<const std::uint8_t> bytes);

}  // namespace bpp
