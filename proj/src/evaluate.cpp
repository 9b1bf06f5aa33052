#include "bpp/evaluate.hpp"

#include <cmath>
#include <sstream>

namespace bpp {

std::vector<TensorF> predict(const Model& model, std::span<const ImagePair> pairs, std::size_t batch) {
    std::vector<TensorF> out;
    out.reserve(pairs.size());
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i + 1;
        while (j < pairs.size() && j - i < batch && pairs[j].lr.shape() == pairs[i].lr.shape()) ++j;
        std::vector<TensorF> lrs;
        for (std::size_t k = i; k < j; ++k) lrs.push_back(pairs[k].lr);
        const TensorF y = forward(model, concat_batch<float>(lrs), Mode::eval);
        for (std::size_t k = 0; k < j - i; ++k) out.push_back(slice_batch(y, k, 1));
        i = j;
    }
    return out;
}

Quality quality_of(std::span<const TensorF> predictions, std::span<const ImagePair> pairs, const EvalOptions& opts) {
    if (pairs.empty()) throw ConfigError("evaluation set is empty");
    Quality q;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const TensorF& pred = predictions[i];
        const TensorF& hr = pairs[i].hr;
        const TensorF py = rgb_to_y(pred, opts.luma), hy = rgb_to_y(hr, opts.luma);
        q.psnr_y += psnr(py, hy, 1.0, opts.shave);
        q.psnr_rgb += psnr(pred, hr, 1.0, opts.shave);
        const Shape& s = hy.shape();
        q.ssim += ssim(crop(py, opts.shave, opts.shave, s.h - 2 * opts.shave, s.w - 2 * opts.shave),
                       crop(hy, opts.shave, opts.shave, s.h - 2 * opts.shave, s.w - 2 * opts.shave));
    }
    const auto n = static_cast<double>(pairs.size());
    q.psnr_y /= n;
    q.psnr_rgb /= n;
    q.ssim /= n;
    return q;
}

double mean_psnr_y(const Model& model, std::span<const ImagePair> pairs, const EvalOptions& opts) {
    if (pairs.empty()) throw ConfigError("evaluation set is empty");
    const auto preds = predict(model, pairs, opts.batch);
    double total = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        total += psnr(rgb_to_y(preds[i], opts.luma), rgb_to_y(pairs[i].hr, opts.luma), 1.0, opts.shave);
    return total / static_cast<double>(pairs.size());
}

Quality evaluate_model(const Model& model, std::span<const ImagePair> pairs, const EvalOptions& opts) {
    const auto preds = predict(model, pairs, opts.batch);
    return quality_of(preds, pairs, opts);
}

Quality evaluate_bicubic(std::span<const ImagePair> pairs, const EvalOptions& opts) {
    std::vector<TensorF> preds;
    for (const auto& p : pairs) preds.push_back(bicubic_resize(p.lr, p.hr.shape().h, p.hr.shape().w));
    return quality_of(preds, pairs, opts);
}

ScoreReport make_report(const Quality& model, const Quality& bicubic, const RuntimeStats& runtime) {
    ScoreReport r{model, bicubic, runtime, 0.0, false};
    const ScoreResult s = score({model.psnr_y, bicubic.psnr_y, runtime.median_ms});
    r.score = s.score;
    r.runtime_compliant = s.runtime_compliant;
    return r;
}

namespace {

nlohmann::json db(double v) { return std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v); }

std::string db_text(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

nlohmann::json report_to_json(const ScoreReport& r) {
    return {{"psnr_y", db(r.model.psnr_y)},
            {"psnr_rgb", db(r.model.psnr_rgb)},
            {"ssim", r.model.ssim},
            {"bicubic", {{"psnr_y", db(r.bicubic.psnr_y)}, {"psnr_rgb", db(r.bicubic.psnr_rgb)}, {"ssim", r.bicubic.ssim}}},
            {"runtime_ms", {{"median", r.runtime.median_ms}, {"p10", r.runtime.p10_ms}, {"p90", r.runtime.p90_ms},
                            {"iters", r.runtime.iters}, {"warmup", r.runtime.warmup}, {"threads", r.runtime.threads},
                            {"input", {r.runtime.input.n, r.runtime.input.c, r.runtime.input.h, r.runtime.input.w}}}},
            {"score", r.score},
            {"runtime_compliant", r.runtime_compliant}};
}

std::string report_csv_header() {
    return "psnr_y,psnr_rgb,ssim,psnr_y_bicubic,median_ms,p10_ms,p90_ms,score,runtime_compliant";
}

std::string report_csv_row(const ScoreReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << db_text(r.model.psnr_y) << "," << db_text(r.model.psnr_rgb) << "," << std::fixed << r.model.ssim << ","
       << db_text(r.bicubic.psnr_y) << "," << r.runtime.median_ms << "," << r.runtime.p10_ms << "," << r.runtime.p90_ms
       << "," << r.score << "," << (r.runtime_compliant ? 1 : 0);
    return os.str();
}

}  // namespace bpp
