#pragma once

// Reference implementations used only by tests. Written for clarity, not speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bpp/ops.hpp"
#include "bpp/tensor.hpp"

namespace oracle {

using bpp::Shape;
using bpp::TensorD;

template <typename T = double>
bpp::Tensor<T> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    bpp::Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
}

// Direct zero-padded cross-correlation, one output element at a time.
inline TensorD conv_loops(const TensorD& x, const bpp::ConvParams<double>& p) {
    const Shape xs = x.shape(), ws = p.weight.shape();
    const std::size_t k = ws.h;
    const std::size_t ho = (xs.h + 2 * p.pad - k) / p.stride + 1;
    const std::size_t wo = (xs.w + 2 * p.pad - k) / p.stride + 1;
    TensorD y(Shape{xs.n, ws.n, ho, wo});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t o = 0; o < ws.n; ++o)
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    double acc = p.bias ? (*p.bias)[o] : 0.0;
                    for (std::size_t c = 0; c < xs.c; ++c)
                        for (std::size_t a = 0; a < k; ++a)
                            for (std::size_t b = 0; b < k; ++b) {
                                const long ih = static_cast<long>(i * p.stride + a) - static_cast<long>(p.pad);
                                const long iw = static_cast<long>(j * p.stride + b) - static_cast<long>(p.pad);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(xs.h) || iw >= static_cast<long>(xs.w))
                                    continue;
                                acc += x.at(n, c, ih, iw) * p.weight.at(o, c, a, b);
                            }
                    y.at(n, o, i, j) = acc;
                }
    return y;
}

// Central differences of a scalar function over every entry of `v`.
inline std::vector<double> numeric_grad(std::vector<double> v, const std::function<double(const std::vector<double>&)>& f,
                                        double eps = 1e-5) {
    std::vector<double> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + eps;
        const double up = f(v);
        v[i] = keep - eps;
        const double down = f(v);
        v[i] = keep;
        g[i] = (up - down) / (2 * eps);
    }
    return g;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// ||a - b|| / ||b||, with ||b|| floored to avoid dividing by zero.
inline double rel_error(std::span<const double> a, std::span<const double> b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

inline std::vector<double> to_vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }
inline TensorD from_vec(const Shape& s, const std::vector<double>& v) { return TensorD(s, v); }

// Keys cubic kernel, written out piecewise.
inline double keys(double x, double a = -0.5) {
    x = std::abs(x);
    if (x <= 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
    if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
    return 0;
}

}  // namespace oracle

namespace oracle {

struct GradCase {
    std::string label;
    double rel_error = 0;
};

// One randomized backward-vs-central-difference comparison in binary64.
// The case kind cycles with `index` so that every backward path is covered.
inline GradCase gradient_case(std::size_t index, std::uint64_t seed) {
    using namespace bpp;
    std::mt19937_64 rng(seed * 7919 + index);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    const std::size_t kind = index % 9;

    if (kind <= 2) {
        const std::size_t stride = 1 + pick(2), pad = pick(2), k = pick(3) == 0 ? 1 : 3;
        const std::size_t cin = 1 + pick(3), cout = 1 + pick(3);
        const std::size_t h = k + 2 + pick(4), w = k + 2 + pick(4);
        const Shape xs{1 + pick(2), cin, h, w};
        ConvParams<double> p;
        p.weight = random_tensor(Shape{cout, cin, k, k}, rng);
        p.bias = to_vec(random_tensor(Shape{1, cout, 1, 1}, rng));
        p.stride = stride;
        p.pad = pad;
        p.floor_output = true;
        const TensorD x = random_tensor(xs, rng);
        const TensorD gy = random_tensor(conv2d_output_shape(xs, p), rng);
        const auto g = conv2d_backward(x, p, gy);
        const std::string geom = " k" + std::to_string(k) + " s" + std::to_string(stride) + " p" + std::to_string(pad);
        if (kind == 0) {
            const auto fd = numeric_grad(to_vec(x), [&](const std::vector<double>& v) {
                return dot(conv2d_forward(from_vec(xs, v), p).data(), gy.data());
            });
            return {"conv grad_x" + geom, rel_error(g.grad_x.data(), fd)};
        }
        if (kind == 1) {
            const auto fd = numeric_grad(to_vec(p.weight), [&](const std::vector<double>& v) {
                ConvParams<double> q = p;
                q.weight = from_vec(p.weight.shape(), v);
                return dot(conv2d_forward(x, q).data(), gy.data());
            });
            return {"conv grad_w" + geom, rel_error(g.grad_w.data(), fd)};
        }
        const auto fd = numeric_grad(*p.bias, [&](const std::vector<double>& v) {
            ConvParams<double> q = p;
            q.bias = v;
            return dot(conv2d_forward(x, q).data(), gy.data());
        });
        return {"conv grad_b" + geom, rel_error(*g.grad_b, fd)};
    }

    if (kind <= 4) {
        const Activation act{kind == 3 ? ActKind::leaky_relu : ActKind::relu, 0.1};
        const Shape s{1, 2, 3, 4};
        TensorD x = random_tensor(s, rng);
        for (auto& v : x.data())
            if (std::abs(v) < 1e-3) v = 0.5;  // stay off the kink
        const TensorD gy = random_tensor(s, rng);
        const auto fd = numeric_grad(to_vec(x), [&](const std::vector<double>& v) {
            return dot(activation(from_vec(s, v), act).data(), gy.data());
        });
        return {kind == 3 ? "leaky_relu grad" : "relu grad", rel_error(activation_grad(x, gy, act).data(), fd)};
    }

    const std::size_t r = 2 + pick(2);
    if (kind == 5) {
        const Shape s{1, r * r * (1 + pick(2)), 2, 3};
        const TensorD x = random_tensor(s, rng);
        const TensorD gy = random_tensor(depth_to_space(x, r).shape(), rng);
        const auto fd = numeric_grad(to_vec(x), [&](const std::vector<double>& v) {
            return dot(depth_to_space(from_vec(s, v), r).data(), gy.data());
        });
        return {"depth_to_space backward r" + std::to_string(r), rel_error(space_to_depth(gy, r).data(), fd)};
    }
    if (kind == 6) {
        const Shape s{1, 1 + pick(2), 2 * r, r};
        const TensorD x = random_tensor(s, rng);
        const TensorD gy = random_tensor(space_to_depth(x, r).shape(), rng);
        const auto fd = numeric_grad(to_vec(x), [&](const std::vector<double>& v) {
            return dot(space_to_depth(from_vec(s, v), r).data(), gy.data());
        });
        return {"space_to_depth backward r" + std::to_string(r), rel_error(depth_to_space(gy, r).data(), fd)};
    }
    if (kind == 7) {
        const Shape s{1, 1 + pick(2), 4, 6};
        const TensorD x = random_tensor(s, rng);
        const TensorD gy = random_tensor(haar_dwt_down(x).shape(), rng);
        const auto fd = numeric_grad(to_vec(x), [&](const std::vector<double>& v) {
            return dot(haar_dwt_down(from_vec(s, v)).data(), gy.data());
        });
        return {"haar_dwt_down backward", rel_error(haar_dwt_up(gy).data(), fd)};
    }
    const Shape s{1, 4 * (1 + pick(2)), 2, 3};
    const TensorD x = random_tensor(s, rng);
    const TensorD gy = random_tensor(haar_dwt_up(x).shape(), rng);
    const auto fd = numeric_grad(to_vec(x), [&](const std::vector<double>& v) {
        return dot(haar_dwt_up(from_vec(s, v)).data(), gy.data());
    });
    return {"haar_dwt_up backward", rel_error(haar_dwt_down(gy).data(), fd)};
}

}  // namespace oracle
