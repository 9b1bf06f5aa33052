#pragma once

#include <array>
#include <cstddef>

#include "bpp/tensor.hpp"

namespace bpp {

// Keys cubic convolution kernel.
double bicubic_kernel(double x, double a = -0.5);

// Separable resize, half-pixel aligned: src = (dst + 0.5) / scale - 0.5, edge
// clamped, output clamped to [0, 1]. Plain mode uses the 4-tap kernel at
// every scale. With `antialias`, downscaling stretches the kernel by 1/scale
// (the MATLAB imresize convention); upscaling is unaffected.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, std::size_t out_h, std::size_t out_w, bool antialias = false,
                         double a = -0.5);

enum class LumaConvention { bt601_studio, bt601_full };

// Single-channel luma in [0,1] units. Studio swing: Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255.
template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img, LumaConvention conv = LumaConvention::bt601_studio);

// 10 log10(peak^2 / MSE) over the region left after removing `shave` border
// pixels on every side. Returns +inf when the inputs are identical.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0, std::size_t shave = 0);

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5) over valid positions.
// Inputs are single-channel with unit peak.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

struct ScoreInputs {
    double psnr = 0;      // dB
    double psnr_bic = 0;  // dB
    double runtime_ms = 0;
};

struct ScoreResult {
    double score = 0;
    bool runtime_compliant = false;  // t < 30 ms
};

inline constexpr double kRuntimeLimitMs = 30.0;

// 0 when psnr <= psnr_bic, else 2^(psnr - psnr_bic) * 2 / (0.1 * sqrt(t)).
ScoreResult score(const ScoreInputs& s);

}  // namespace bpp
