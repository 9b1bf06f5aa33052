#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpp/errors.hpp"

namespace bpp {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

std::size_t dtype_size(DType d);
std::string dtype_name(DType d);

// NCHW extents.
struct Shape {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::array<std::size_t, 4> dims() const { return {n, c, h, w}; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Dense row-major NCHW array. Value type: copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.numel())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_.str());
    }

    static constexpr DType dtype() { return dtype_of<T>(); }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
    T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const { return data_[offset(n, c, h, w)]; }

    // Contiguous H*W plane for (n, c).
    std::span<T> plane(std::size_t n, std::size_t c) {
        return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
    }
    std::span<const T> plane(std::size_t n, std::size_t c) const {
        return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Sample index range [begin, begin+count) along N.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t begin, std::size_t count);

template <typename T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts);

template <typename T>
bool all_finite(const Tensor<T>& x);

}  // namespace bpp
