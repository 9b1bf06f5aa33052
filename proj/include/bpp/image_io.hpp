#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bpp/tensor.hpp"

namespace bpp {

// 8-bit RGB PNG -> (1, 3, H, W) in [0, 1]. Grayscale, alpha and 16-bit
// files raise FormatError.
TensorF load_png(const std::filesystem::path& path);

// Rounds half away from zero after clamping to [0, 1].
void save_png(const TensorF& img, const std::filesystem::path& path);

// Baseline JPEG round trip (4:2:0 chroma) used to degrade LR images.
bool jpeg_codec_available();
std::vector<std::uint8_t> encode_jpeg(const TensorF& img, int quality);
TensorF decode_jpeg(const std::vector<std::uint8_t>& bytes);

// Number of files opened by the image I/O layer since process start.
std::uint64_t io_open_count();

std::vector<std::uint8_t> to_rgb8(const TensorF& img);
TensorF from_rgb8(const std::uint8_t* rgb, std::size_t h, std::size_t w);

}  // namespace bpp
