#pragma once

#include <cstddef>

#include "bpp/tensor.hpp"

namespace bpp {

struct AdamHyper {
    double beta1 = 0.99;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::size_t step = 0;
    Tensor<T> m;
    Tensor<T> v;

    static AdamState zeros(const Shape& s) { return {0, Tensor<T>(s), Tensor<T>(s)}; }
};

template <typename T>
struct AdamResult {
    Tensor<T> param;
    AdamState<T> state;
};

// One bias-corrected Adam update. Throws NumericError on a non-finite gradient.
template <typename T>
AdamResult<T> adam_step(const Tensor<T>& param, const Tensor<T>& grad, const AdamState<T>& state, double lr,
                        const AdamHyper& hyper = {});

// Constant for `constant_epochs`, then linear down to lr_final at the last epoch.
struct LrSchedule {
    double lr0 = 5e-4;
    std::size_t total_epochs = 1000;
    std::size_t constant_epochs = 500;
    double lr_final = 1e-8;

    void validate() const;
};

double lr_at(std::size_t epoch, const LrSchedule& s);

}  // namespace bpp
