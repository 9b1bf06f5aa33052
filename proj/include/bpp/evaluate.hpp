#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <json.hpp>

#include "bpp/bench.hpp"
#include "bpp/datapipe.hpp"
#include "bpp/metrics.hpp"
#include "bpp/model.hpp"

namespace bpp {

struct EvalOptions {
    std::size_t shave = 3;
    std::size_t batch = 8;  // images of equal size are forwarded together
    LumaConvention luma = LumaConvention::bt601_studio;
};

struct Quality {
    double psnr_y = 0;
    double psnr_rgb = 0;
    double ssim = 0;
};

// Eval-mode (clamped) predictions for every pair, in order.
std::vector<TensorF> predict(const Model& model, std::span<const ImagePair> pairs, std::size_t batch = 8);

// Mean over images of per-image PSNR on luma, border shaved.
double mean_psnr_y(const Model& model, std::span<const ImagePair> pairs, const EvalOptions& opts = {});

Quality evaluate_model(const Model& model, std::span<const ImagePair> pairs, const EvalOptions& opts = {});
// Baseline: bicubic x3 upscaling of each LR image.
Quality evaluate_bicubic(std::span<const ImagePair> pairs, const EvalOptions& opts = {});

Quality quality_of(std::span<const TensorF> predictions, std::span<const ImagePair> pairs, const EvalOptions& opts);

struct ScoreReport {
    Quality model;
    Quality bicubic;
    RuntimeStats runtime;
    double score = 0;
    bool runtime_compliant = false;
};

ScoreReport make_report(const Quality& model, const Quality& bicubic, const RuntimeStats& runtime);

// +inf PSNR values are rendered as the string "inf".
nlohmann::json report_to_json(const ScoreReport& r);
std::string report_csv_header();
std::string report_csv_row(const ScoreReport& r);

}  // namespace bpp
