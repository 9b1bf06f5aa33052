#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "bpp/tensor.hpp"

namespace bpp {

// Weights are (Cout, Cin, k, k); k must be odd. Cross-correlation, no kernel flip.
template <typename T>
struct ConvParams {
    Tensor<T> weight;
    std::optional<std::vector<T>> bias;
    std::size_t stride = 1;
    std::size_t pad = 0;
    // Round the output extent down instead of rejecting a fractional one;
    // the trailing input rows/cols are then never read.
    bool floor_output = false;

    std::size_t out_channels() const { return weight.shape().n; }
    std::size_t in_channels() const { return weight.shape().c; }
    std::size_t kernel() const { return weight.shape().h; }
};

template <typename T>
struct ConvGrads {
    Tensor<T> grad_x;  // empty when not requested
    Tensor<T> grad_w;
    std::optional<std::vector<T>> grad_b;
};

// Output extents; throws ShapeError on channel mismatch or (unless
// floor_output) fractional output size.
template <typename T>
Shape conv2d_output_shape(const Shape& x, const ConvParams<T>& p);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& grad_y,
                             bool need_grad_x = true);

enum class ActKind { relu, leaky_relu };

struct Activation {
    ActKind kind = ActKind::leaky_relu;
    double slope = 0.1;
};

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation act);

// Derivative evaluated at the pre-activation input x; 1 at exactly zero.
template <typename T>
Tensor<T> activation_grad(const Tensor<T>& x, const Tensor<T>& grad_y, Activation act);

// out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w]
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, std::size_t r);

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, std::size_t r);

// Orthonormal single-level Haar analysis; per input channel the subbands are
// emitted as [LL, LH, HL, HH].
template <typename T>
Tensor<T> haar_dwt_down(const Tensor<T>& x);

// Synthesis (inverse and transpose of haar_dwt_down).
template <typename T>
Tensor<T> haar_dwt_up(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x);

// Worker count used by batch-parallel kernels. 1 means fully sequential.
void set_num_threads(int n);
int num_threads();

}  // namespace bpp
