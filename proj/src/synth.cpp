#include "bpp/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "bpp/image_io.hpp"

namespace bpp {

namespace {

using Color = std::array<double, 3>;

struct Painter {
    std::size_t h, w;
    std::vector<double> rgb;  // interleaved

    void blend(std::size_t y, std::size_t x, const Color& c, double alpha) {
        double* p = &rgb[(y * w + x) * 3];
        for (int k = 0; k < 3; ++k) p[k] = p[k] * (1 - alpha) + c[k] * alpha;
    }
};

constexpr int kSuper = 4;

// Coverage of an implicit shape by kSuper x kSuper sub-samples.
template <typename Inside>
void fill_shape(Painter& p, double y0, double x0, double y1, double x1, const Color& c, double opacity, Inside inside) {
    const auto ya = static_cast<std::size_t>(std::clamp(std::floor(y0), 0.0, static_cast<double>(p.h)));
    const auto yb = static_cast<std::size_t>(std::clamp(std::ceil(y1), 0.0, static_cast<double>(p.h)));
    const auto xa = static_cast<std::size_t>(std::clamp(std::floor(x0), 0.0, static_cast<double>(p.w)));
    const auto xb = static_cast<std::size_t>(std::clamp(std::ceil(x1), 0.0, static_cast<double>(p.w)));
    for (std::size_t y = ya; y < yb; ++y)
        for (std::size_t x = xa; x < xb; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx)
                    hits += inside(static_cast<double>(y) + (sy + 0.5) / kSuper, static_cast<double>(x) + (sx + 0.5) / kSuper);
            if (hits) p.blend(y, x, c, opacity * hits / double(kSuper * kSuper));
        }
}

}  // namespace

TensorF synth_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto color = [&] { return Color{u01(rng), u01(rng), u01(rng)}; };
    const double H = static_cast<double>(h), W = static_cast<double>(w);

    Painter p{h, w, std::vector<double>(h * w * 3)};
    const Color c00 = color(), c01 = color(), c10 = color(), c11 = color();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double fy = y / H, fx = x / W;
            for (int k = 0; k < 3; ++k)
                p.rgb[(y * w + x) * 3 + k] = (c00[k] * (1 - fx) + c01[k] * fx) * (1 - fy) + (c10[k] * (1 - fx) + c11[k] * fx) * fy;
        }

    const int shapes = 10 + static_cast<int>(u01(rng) * 10);
    for (int i = 0; i < shapes; ++i) {
        const double cy = u01(rng) * H, cx = u01(rng) * W;
        const double ry = (0.04 + 0.2 * u01(rng)) * H, rx = (0.04 + 0.2 * u01(rng)) * W;
        const double ang = u01(rng) * std::numbers::pi;
        const double ca = std::cos(ang), sa = std::sin(ang);
        const Color c = color();
        const double opacity = 0.6 + 0.4 * u01(rng);
        const double r = std::max(rx, ry) * 1.5;
        switch (static_cast<int>(u01(rng) * 4)) {
            case 0:  // ellipse
                fill_shape(p, cy - r, cx - r, cy + r, cx + r, c, opacity, [&](double y, double x) {
                    const double dy = y - cy, dx = x - cx;
                    const double u = (dx * ca + dy * sa) / rx, v = (-dx * sa + dy * ca) / ry;
                    return u * u + v * v <= 1.0;
                });
                break;
            case 1:  // rotated rectangle
                fill_shape(p, cy - r, cx - r, cy + r, cx + r, c, opacity, [&](double y, double x) {
                    const double dy = y - cy, dx = x - cx;
                    return std::abs(dx * ca + dy * sa) <= rx && std::abs(-dx * sa + dy * ca) <= ry;
                });
                break;
            case 2: {  // triangle
                std::array<double, 6> v{};
                for (int k = 0; k < 3; ++k) {
                    const double a = ang + k * 2.0944 + (u01(rng) - 0.5);
                    v[2 * k] = cy + std::sin(a) * ry * 1.3;
                    v[2 * k + 1] = cx + std::cos(a) * rx * 1.3;
                }
                fill_shape(p, cy - r, cx - r, cy + r, cx + r, c, opacity, [&](double y, double x) {
                    auto side = [&](int a, int b) {
                        return (v[2 * b + 1] - v[2 * a + 1]) * (y - v[2 * a]) - (v[2 * b] - v[2 * a]) * (x - v[2 * a + 1]);
                    };
                    const double s0 = side(0, 1), s1 = side(1, 2), s2 = side(2, 0);
                    return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
                });
                break;
            }
            default: {  // grating patch inside an ellipse
                const double period = 3.0 + 9.0 * u01(rng);
                const double ga = u01(rng) * std::numbers::pi;
                const Color c2 = color();
                const double y0 = std::max(0.0, cy - r), y1 = std::min(H, cy + r);
                const double x0 = std::max(0.0, cx - r), x1 = std::min(W, cx + r);
                for (auto y = static_cast<std::size_t>(y0); y < static_cast<std::size_t>(y1); ++y)
                    for (auto x = static_cast<std::size_t>(x0); x < static_cast<std::size_t>(x1); ++x) {
                        const double dy = y - cy, dx = x - cx;
                        const double u = (dx * ca + dy * sa) / rx, v = (-dx * sa + dy * ca) / ry;
                        if (u * u + v * v > 1.0) continue;
                        const double phase = (dx * std::cos(ga) + dy * std::sin(ga)) * 2 * std::numbers::pi / period;
                        const double t = 0.5 + 0.5 * std::sin(phase);
                        p.blend(y, x, Color{c[0] * t + c2[0] * (1 - t), c[1] * t + c2[1] * (1 - t), c[2] * t + c2[2] * (1 - t)},
                                opacity);
                    }
                break;
            }
        }
    }

    const int strokes = 3 + static_cast<int>(u01(rng) * 5);
    for (int i = 0; i < strokes; ++i) {
        const double y0 = u01(rng) * H, x0 = u01(rng) * W, y1 = u01(rng) * H, x1 = u01(rng) * W;
        const double half = 0.4 + 1.2 * u01(rng);
        const Color c = color();
        const double dy = y1 - y0, dx = x1 - x0, len2 = dy * dy + dx * dx + 1e-9;
        fill_shape(p, std::min(y0, y1) - 2, std::min(x0, x1) - 2, std::max(y0, y1) + 2, std::max(x0, x1) + 2, c, 1.0,
                   [&](double y, double x) {
                       const double t = std::clamp(((y - y0) * dy + (x - x0) * dx) / len2, 0.0, 1.0);
                       const double py = y0 + t * dy - y, px = x0 + t * dx - x;
                       return py * py + px * px <= half * half;
                   });
    }

    std::normal_distribution<double> noise(0.0, 1.0 / 255.0);
    TensorF img(Shape{1, 3, h, w});
    for (int k = 0; k < 3; ++k) {
        auto plane = img.plane(0, static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < h * w; ++i)
            plane[i] = static_cast<float>(std::clamp(p.rgb[i * 3 + k] + noise(rng), 0.0, 1.0));
    }
    // Quantize to 8 bits so in-memory pairs match PNG round trips.
    const auto rgb8 = to_rgb8(img);
    return from_rgb8(rgb8.data(), h, w);
}

std::vector<ImagePair> synth_pairs(const SynthSpec& spec, const PrepareOptions& opts) {
    std::vector<ImagePair> pairs;
    for (std::size_t i = 0; i < spec.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "img_%04zu", i);
        pairs.push_back(make_pair(synth_image(spec.hr_h, spec.hr_w, spec.seed * 1000 + i), id, opts));
    }
    return pairs;
}

void write_synth_pngs(const SynthSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < spec.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04zu.png", i);
        save_png(synth_image(spec.hr_h, spec.hr_w, spec.seed * 1000 + i), dir / name);
    }
}

}  // namespace bpp
