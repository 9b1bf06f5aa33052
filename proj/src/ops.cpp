#include "bpp/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <Eigen/Core>

namespace bpp {

namespace {

std::atomic<int> g_threads{1};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Runs fn(i) for i in [0, count). Each index is handled by exactly one worker,
// so per-index results do not depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, g_threads.load()));
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t used = std::min(workers, count);
    pool.reserve(used);
    for (std::size_t t = 0; t < used; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += used) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct ConvGeom {
    std::size_t cin, h, w, cout, k, stride, pad, ho, wo;
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvGeom geometry(const Shape& xs, const ConvParams<T>& p) {
    const Shape& ws = p.weight.shape();
    if (ws.h != ws.w || ws.h % 2 == 0) throw ShapeError("conv kernel must be square with odd size, got " + ws.str());
    if (p.stride == 0) throw ShapeError("conv stride must be positive");
    if (xs.c != ws.c)
        throw ShapeError("conv input has " + std::to_string(xs.c) + " channels, weights expect " +
                         std::to_string(ws.c));
    if (p.bias && p.bias->size() != ws.n) throw ShapeError("conv bias length does not match output channels");
    const std::size_t k = ws.h;
    const std::size_t ph = xs.h + 2 * p.pad, pw = xs.w + 2 * p.pad;
    if (ph < k || pw < k) throw ShapeError("conv input " + xs.str() + " smaller than kernel");
    if (!p.floor_output && ((ph - k) % p.stride != 0 || (pw - k) % p.stride != 0))
        throw ShapeError("conv output size is fractional for input " + xs.str() + " stride " +
                         std::to_string(p.stride) + " pad " + std::to_string(p.pad));
    return {xs.c, xs.h, xs.w, ws.n, k, p.stride, p.pad, (ph - k) / p.stride + 1, (pw - k) / p.stride + 1};
}

// cols is (cin*k*k) x (ho*wo), row-major.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const std::size_t hw = g.ho * g.wo;
    for (std::size_t c = 0; c < g.cin; ++c) {
        const T* xc = x + c * g.h * g.w;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                T* row = cols + ((c * g.k + ki) * g.k + kj) * hw;
                for (std::size_t oh = 0; oh < g.ho; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    T* out = row + oh * g.wo;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(out, out + g.wo, T{0});
                        continue;
                    }
                    const T* xrow = xc + static_cast<std::size_t>(ih) * g.w;
                    for (std::size_t ow = 0; ow < g.wo; ++ow) {
                        const auto iw =
                            static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : xrow[iw];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
    const std::size_t hw = g.ho * g.wo;
    for (std::size_t c = 0; c < g.cin; ++c) {
        T* xc = x + c * g.h * g.w;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                const T* row = cols + ((c * g.k + ki) * g.k + kj) * hw;
                for (std::size_t oh = 0; oh < g.ho; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    T* xrow = xc + static_cast<std::size_t>(ih) * g.w;
                    const T* in = row + oh * g.wo;
                    for (std::size_t ow = 0; ow < g.wo; ++ow) {
                        const auto iw =
                            static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) xrow[iw] += in[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

template <typename T>
Shape conv2d_output_shape(const Shape& x, const ConvParams<T>& p) {
    const ConvGeom g = geometry(x, p);
    return {x.n, g.cout, g.ho, g.wo};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
    const Shape& xs = x.shape();
    const ConvGeom g = geometry(xs, p);
    Tensor<T> y(Shape{xs.n, g.cout, g.ho, g.wo});
    const std::size_t rows = g.cin * g.k * g.k, hw = g.ho * g.wo;
    CMapMat<T> wmat(p.weight.ptr(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(rows));

    parallel_for(xs.n, [&](std::size_t n) {
        const T* xn = x.ptr() + n * g.cin * g.h * g.w;
        MapMat<T> out(y.ptr() + n * g.cout * hw, static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(hw));
        if (g.pointwise()) {
            out.noalias() = wmat * CMapMat<T>(xn, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
        } else {
            std::vector<T> cols(rows * hw);
            im2col(xn, g, cols.data());
            out.noalias() = wmat * CMapMat<T>(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
        }
        if (p.bias) {
            for (std::size_t o = 0; o < g.cout; ++o) out.row(static_cast<Eigen::Index>(o)).array() += (*p.bias)[o];
        }
    });
    return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& grad_y, bool need_grad_x) {
    const Shape& xs = x.shape();
    const ConvGeom g = geometry(xs, p);
    if (grad_y.shape() != Shape{xs.n, g.cout, g.ho, g.wo})
        throw ShapeError("conv grad_y " + grad_y.shape().str() + " does not match forward output " +
                         Shape{xs.n, g.cout, g.ho, g.wo}.str());
    const std::size_t rows = g.cin * g.k * g.k, hw = g.ho * g.wo;
    const std::size_t wsize = g.cout * rows;
    CMapMat<T> wmat(p.weight.ptr(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(rows));

    ConvGrads<T> out;
    if (need_grad_x) out.grad_x = Tensor<T>(xs);
    // Per-sample weight gradients, reduced afterwards in sample order.
    std::vector<T> partial(xs.n * wsize);

    parallel_for(xs.n, [&](std::size_t n) {
        const T* xn = x.ptr() + n * g.cin * g.h * g.w;
        CMapMat<T> gy(grad_y.ptr() + n * g.cout * hw, static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(hw));
        MapMat<T> gw(partial.data() + n * wsize, static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(rows));
        if (g.pointwise()) {
            CMapMat<T> cols(xn, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
            gw.noalias() = gy * cols.transpose();
            if (need_grad_x) {
                MapMat<T> gx(out.grad_x.ptr() + n * g.cin * g.h * g.w, static_cast<Eigen::Index>(rows),
                             static_cast<Eigen::Index>(hw));
                gx.noalias() = wmat.transpose() * gy;
            }
            return;
        }
        std::vector<T> cols(rows * hw);
        im2col(xn, g, cols.data());
        CMapMat<T> cm(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
        gw.noalias() = gy * cm.transpose();
        if (need_grad_x) {
            MapMat<T> gcols(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
            gcols.noalias() = wmat.transpose() * gy;
            col2im_add(cols.data(), g, out.grad_x.ptr() + n * g.cin * g.h * g.w);
        }
    });

    out.grad_w = Tensor<T>(p.weight.shape());
    T* gw = out.grad_w.ptr();
    for (std::size_t n = 0; n < xs.n; ++n) {
        const T* src = partial.data() + n * wsize;
        for (std::size_t i = 0; i < wsize; ++i) gw[i] += src[i];
    }
    if (p.bias) {
        std::vector<T> gb(g.cout, T{0});
        for (std::size_t n = 0; n < xs.n; ++n) {
            for (std::size_t o = 0; o < g.cout; ++o) {
                const T* row = grad_y.ptr() + (n * g.cout + o) * hw;
                T s{0};
                for (std::size_t i = 0; i < hw; ++i) s += row[i];
                gb[o] += s;
            }
        }
        out.grad_b = std::move(gb);
    }
    return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation act) {
    Tensor<T> y = x;
    const T slope = act.kind == ActKind::relu ? T{0} : static_cast<T>(act.slope);
    for (T& v : y.data()) v = v >= T{0} ? v : v * slope;
    return y;
}

template <typename T>
Tensor<T> activation_grad(const Tensor<T>& x, const Tensor<T>& grad_y, Activation act) {
    if (x.shape() != grad_y.shape()) throw ShapeError("activation_grad shape mismatch");
    Tensor<T> g = grad_y;
    const T slope = act.kind == ActKind::relu ? T{0} : static_cast<T>(act.slope);
    auto xs = x.data();
    auto gs = g.data();
    for (std::size_t i = 0; i < gs.size(); ++i)
        if (xs[i] < T{0}) gs[i] *= slope;
    return g;
}

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, std::size_t r) {
    const Shape& s = x.shape();
    if (r == 0 || s.c % (r * r) != 0)
        throw ShapeError("depth_to_space: channels " + std::to_string(s.c) + " not divisible by r^2=" +
                         std::to_string(r * r));
    const std::size_t co = s.c / (r * r);
    Tensor<T> y(Shape{s.n, co, s.h * r, s.w * r});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < co; ++c)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < r; ++j) {
                    const T* src = x.ptr() + x.offset(n, c * r * r + i * r + j, 0, 0);
                    for (std::size_t h = 0; h < s.h; ++h) {
                        T* dst = y.ptr() + y.offset(n, c, h * r + i, j);
                        for (std::size_t w = 0; w < s.w; ++w) dst[w * r] = src[h * s.w + w];
                    }
                }
    return y;
}

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, std::size_t r) {
    const Shape& s = x.shape();
    if (r == 0 || s.h % r != 0 || s.w % r != 0)
        throw ShapeError("space_to_depth: spatial dims " + s.str() + " not divisible by " + std::to_string(r));
    const std::size_t ho = s.h / r, wo = s.w / r;
    Tensor<T> y(Shape{s.n, s.c * r * r, ho, wo});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < r; ++j) {
                    T* dst = y.ptr() + y.offset(n, c * r * r + i * r + j, 0, 0);
                    for (std::size_t h = 0; h < ho; ++h) {
                        const T* src = x.ptr() + x.offset(n, c, h * r + i, j);
                        for (std::size_t w = 0; w < wo; ++w) dst[h * wo + w] = src[w * r];
                    }
                }
    return y;
}

template <typename T>
Tensor<T> haar_dwt_down(const Tensor<T>& x) {
    const Shape& s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("haar_dwt_down needs even spatial dims, got " + s.str());
    const std::size_t ho = s.h / 2, wo = s.w / 2;
    Tensor<T> y(Shape{s.n, s.c * 4, ho, wo});
    const T half{0.5};
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t h = 0; h < ho; ++h)
                for (std::size_t w = 0; w < wo; ++w) {
                    const T a = x.at(n, c, 2 * h, 2 * w), b = x.at(n, c, 2 * h, 2 * w + 1);
                    const T cc = x.at(n, c, 2 * h + 1, 2 * w), d = x.at(n, c, 2 * h + 1, 2 * w + 1);
                    y.at(n, 4 * c + 0, h, w) = (a + b + cc + d) * half;
                    y.at(n, 4 * c + 1, h, w) = (a - b + cc - d) * half;
                    y.at(n, 4 * c + 2, h, w) = (a + b - cc - d) * half;
                    y.at(n, 4 * c + 3, h, w) = (a - b - cc + d) * half;
                }
    return y;
}

template <typename T>
Tensor<T> haar_dwt_up(const Tensor<T>& x) {
    const Shape& s = x.shape();
    if (s.c % 4 != 0) throw ShapeError("haar_dwt_up needs channels divisible by 4, got " + s.str());
    const std::size_t co = s.c / 4;
    Tensor<T> y(Shape{s.n, co, s.h * 2, s.w * 2});
    const T half{0.5};
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < co; ++c)
            for (std::size_t h = 0; h < s.h; ++h)
                for (std::size_t w = 0; w < s.w; ++w) {
                    const T ll = x.at(n, 4 * c, h, w), lh = x.at(n, 4 * c + 1, h, w);
                    const T hl = x.at(n, 4 * c + 2, h, w), hh = x.at(n, 4 * c + 3, h, w);
                    y.at(n, c, 2 * h, 2 * w) = (ll + lh + hl + hh) * half;
                    y.at(n, c, 2 * h, 2 * w + 1) = (ll - lh + hl - hh) * half;
                    y.at(n, c, 2 * h + 1, 2 * w) = (ll + lh - hl - hh) * half;
                    y.at(n, c, 2 * h + 1, 2 * w + 1) = (ll - lh - hl + hh) * half;
                }
    return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
    Tensor<T> y = a;
    auto ys = y.data();
    auto bs = b.data();
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += bs[i];
    return y;
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (T& v : y.data()) v = std::clamp(v, T{0}, T{1});
    return y;
}

#define BPP_INSTANTIATE_OPS(T)                                                                              \
    template Shape conv2d_output_shape(const Shape&, const ConvParams<T>&);                                 \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvParams<T>&);                              \
    template ConvGrads<T> conv2d_backward(const Tensor<T>&, const ConvParams<T>&, const Tensor<T>&, bool);  \
    template Tensor<T> activation(const Tensor<T>&, Activation);                                            \
    template Tensor<T> activation_grad(const Tensor<T>&, const Tensor<T>&, Activation);                     \
    template Tensor<T> depth_to_space(const Tensor<T>&, std::size_t);                                       \
    template Tensor<T> space_to_depth(const Tensor<T>&, std::size_t);                                       \
    template Tensor<T> haar_dwt_down(const Tensor<T>&);                                                     \
    template Tensor<T> haar_dwt_up(const Tensor<T>&);                                                       \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                             \
    template Tensor<T> clamp01(const Tensor<T>&);

BPP_INSTANTIATE_OPS(float)
BPP_INSTANTIATE_OPS(double)

}  // namespace bpp
