#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bpp/datapipe.hpp"
#include "bpp/tensor.hpp"

namespace bpp {

// Procedural RGB scene in [0, 1]: gradient background, anti-aliased shapes,
// oriented gratings, thin strokes and mild sensor noise. Deterministic in seed.
TensorF synth_image(std::size_t h, std::size_t w, std::uint64_t seed);

struct SynthSpec {
    std::size_t count = 8;
    std::size_t hr_h = 288;
    std::size_t hr_w = 288;
    std::uint64_t seed = 1;
};

std::vector<ImagePair> synth_pairs(const SynthSpec& spec, const PrepareOptions& opts = {});

// Writes count PNGs named img_XXXX.png into dir.
void write_synth_pngs(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace bpp
