#include "bpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace bpp {

double bicubic_kernel(double x, double a) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
    return 0.0;
}

namespace {

struct Taps {
    std::vector<std::ptrdiff_t> first;  // per output index, may lie outside [0, n)
    std::vector<std::vector<double>> weights;
};

// Per-output contribution list along one axis, edge indices clamped.
Taps axis_taps(std::size_t in, std::size_t out, bool antialias, double a) {
    const double scale = static_cast<double>(out) / static_cast<double>(in);
    const double stretch = (antialias && scale < 1.0) ? 1.0 / scale : 1.0;
    const double support = 2.0 * stretch;
    Taps t;
    t.first.resize(out);
    t.weights.resize(out);
    for (std::size_t d = 0; d < out; ++d) {
        const double center = (static_cast<double>(d) + 0.5) / scale - 0.5;
        const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support)) + 1;
        const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + support)) - 1;
        std::vector<double> w;
        double sum = 0;
        for (std::ptrdiff_t s = lo; s <= hi; ++s) {
            const double k = bicubic_kernel((center - static_cast<double>(s)) / stretch, a);
            w.push_back(k);
            sum += k;
        }
        if (stretch != 1.0)
            for (double& v : w) v /= sum;
        t.first[d] = lo;
        t.weights[d] = std::move(w);
    }
    return t;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

}  // namespace

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, std::size_t out_h, std::size_t out_w, bool antialias, double a) {
    const Shape& s = img.shape();
    if (out_h == 0 || out_w == 0) throw ShapeError("bicubic_resize: output dims must be positive");
    if (s.h == 0 || s.w == 0) throw ShapeError("bicubic_resize: empty input " + s.str());
    const Taps th = axis_taps(s.h, out_h, antialias, a);
    const Taps tw = axis_taps(s.w, out_w, antialias, a);

    Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
    std::vector<double> tmp(s.h * out_w);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            auto src = img.plane(n, c);
            // horizontal pass
            for (std::size_t y = 0; y < s.h; ++y) {
                for (std::size_t x = 0; x < out_w; ++x) {
                    const std::ptrdiff_t lo = tw.first[x];
                    double acc = 0;
                    for (std::size_t k = 0; k < tw.weights[x].size(); ++k)
                        acc += tw.weights[x][k] * src[y * s.w + clamp_index(lo + static_cast<std::ptrdiff_t>(k), s.w)];
                    tmp[y * out_w + x] = acc;
                }
            }
            // vertical pass
            auto dst = out.plane(n, c);
            for (std::size_t y = 0; y < out_h; ++y) {
                const std::ptrdiff_t lo = th.first[y];
                for (std::size_t x = 0; x < out_w; ++x) {
                    double acc = 0;
                    for (std::size_t k = 0; k < th.weights[y].size(); ++k)
                        acc += th.weights[y][k] * tmp[clamp_index(lo + static_cast<std::ptrdiff_t>(k), s.h) * out_w + x];
                    dst[y * out_w + x] = static_cast<T>(std::clamp(acc, 0.0, 1.0));
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img, LumaConvention conv) {
    const Shape& s = img.shape();
    if (s.c != 3) throw ShapeError("rgb_to_y needs 3 channels, got " + s.str());
    double off = 16.0, kr = 65.481, kg = 128.553, kb = 24.966;
    if (conv == LumaConvention::bt601_full) {
        off = 0.0;
        kr = 0.299 * 255.0;
        kg = 0.587 * 255.0;
        kb = 0.114 * 255.0;
    }
    Tensor<T> y(Shape{s.n, 1, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
        auto r = img.plane(n, 0), g = img.plane(n, 1), b = img.plane(n, 2);
        auto out = y.plane(n, 0);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<T>((off + kr * r[i] + kg * g[i] + kb * b[i]) / 255.0);
    }
    return y;
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak, std::size_t shave) {
    const Shape& s = a.shape();
    if (s != b.shape()) throw ShapeError("psnr: " + s.str() + " vs " + b.shape().str());
    if (2 * shave >= s.h || 2 * shave >= s.w) throw ShapeError("psnr: shave leaves no pixels for " + s.str());
    double sse = 0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = shave; y < s.h - shave; ++y)
                for (std::size_t x = shave; x < s.w - shave; ++x) {
                    const double d = static_cast<double>(a.at(n, c, y, x)) - static_cast<double>(b.at(n, c, y, x));
                    sse += d * d;
                    ++count;
                }
    const double mse = sse / static_cast<double>(count);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    constexpr std::size_t win = 11;
    constexpr double sigma = 1.5;
    const Shape& s = a.shape();
    if (s != b.shape()) throw ShapeError("ssim: " + s.str() + " vs " + b.shape().str());
    if (s.c != 1) throw ShapeError("ssim expects single-channel input, got " + s.str());
    if (s.h < win || s.w < win) throw ShapeError("ssim: input " + s.str() + " smaller than the 11x11 window");

    std::array<double, win> g{};
    double gsum = 0;
    for (std::size_t i = 0; i < win; ++i) {
        const double d = static_cast<double>(i) - 5.0;
        g[i] = std::exp(-d * d / (2 * sigma * sigma));
        gsum += g[i];
    }
    for (double& v : g) v /= gsum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const std::size_t oh = s.h - win + 1, ow = s.w - win + 1;
    double total = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
        auto pa = a.plane(n, 0), pb = b.plane(n, 0);
        // Separable filtering of the five moment images; horizontal first.
        std::vector<double> h1(s.h * ow), h2(s.h * ow), haa(s.h * ow), hbb(s.h * ow), hab(s.h * ow);
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double m1 = 0, m2 = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t k = 0; k < win; ++k) {
                    const double va = pa[y * s.w + x + k], vb = pb[y * s.w + x + k];
                    m1 += g[k] * va;
                    m2 += g[k] * vb;
                    saa += g[k] * va * va;
                    sbb += g[k] * vb * vb;
                    sab += g[k] * va * vb;
                }
                const std::size_t i = y * ow + x;
                h1[i] = m1, h2[i] = m2, haa[i] = saa, hbb[i] = sbb, hab[i] = sab;
            }
        double sum = 0;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double mu1 = 0, mu2 = 0, eaa = 0, ebb = 0, eab = 0;
                for (std::size_t k = 0; k < win; ++k) {
                    const std::size_t i = (y + k) * ow + x;
                    mu1 += g[k] * h1[i];
                    mu2 += g[k] * h2[i];
                    eaa += g[k] * haa[i];
                    ebb += g[k] * hbb[i];
                    eab += g[k] * hab[i];
                }
                const double va = eaa - mu1 * mu1, vb = ebb - mu2 * mu2, cov = eab - mu1 * mu2;
                sum += ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) / ((mu1 * mu1 + mu2 * mu2 + c1) * (va + vb + c2));
            }
        total += sum / static_cast<double>(oh * ow);
    }
    return total / static_cast<double>(s.n);
}

ScoreResult score(const ScoreInputs& s) {
    if (!(s.runtime_ms > 0.0)) throw RangeError("score: runtime must be positive");
    ScoreResult r;
    r.runtime_compliant = s.runtime_ms < kRuntimeLimitMs;
    if (s.psnr <= s.psnr_bic) return r;
    r.score = std::exp2(s.psnr - s.psnr_bic) * 2.0 / (0.1 * std::sqrt(s.runtime_ms));
    return r;
}

template Tensor<float> bicubic_resize(const Tensor<float>&, std::size_t, std::size_t, bool, double);
template Tensor<double> bicubic_resize(const Tensor<double>&, std::size_t, std::size_t, bool, double);
template Tensor<float> rgb_to_y(const Tensor<float>&, LumaConvention);
template Tensor<double> rgb_to_y(const Tensor<double>&, LumaConvention);
template double psnr(const Tensor<float>&, const Tensor<float>&, double, std::size_t);
template double psnr(const Tensor<double>&, const Tensor<double>&, double, std::size_t);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace bpp
