#include "bpp/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace bpp {

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

std::string dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

std::string Shape::str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    const Shape& s = x.shape();
    if (begin + count > s.n) throw ShapeError("batch slice out of range for " + s.str());
    Shape out{count, s.c, s.h, s.w};
    const std::size_t per = s.c * s.h * s.w;
    auto first = x.data().begin() + static_cast<std::ptrdiff_t>(begin * per);
    return Tensor<T>(out, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(count * per)));
}

template <typename T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts) {
    if (parts.empty()) return {};
    Shape s = parts.front().shape();
    std::vector<T> data;
    std::size_t n = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        if (ps.c != s.c || ps.h != s.h || ps.w != s.w)
            throw ShapeError("concat_batch: " + ps.str() + " incompatible with " + s.str());
        data.insert(data.end(), p.data().begin(), p.data().end());
        n += ps.n;
    }
    s.n = n;
    return Tensor<T>(s, std::move(data));
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
    return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

template Tensor<float> slice_batch(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> slice_batch(const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> concat_batch(std::span<const Tensor<float>>);
template Tensor<double> concat_batch(std::span<const Tensor<double>>);
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace bpp
