#include "bpp/optim.hpp"

#include <cmath>
#include <string>

namespace bpp {

template <typename T>
AdamResult<T> adam_step(const Tensor<T>& param, const Tensor<T>& grad, const AdamState<T>& state, double lr,
                        const AdamHyper& hyper) {
    if (grad.shape() != param.shape() || state.m.shape() != param.shape() || state.v.shape() != param.shape())
        throw ShapeError("adam_step: parameter, gradient and moment shapes disagree");
    if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient");

    AdamResult<T> out{param, state};
    out.state.step = state.step + 1;
    const double t = static_cast<double>(out.state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);

    auto p = out.param.data();
    auto m = out.state.m.data();
    auto v = out.state.v.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
        const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / c1;
        const double vhat = vi / c2;
        p[i] = static_cast<T>(p[i] - lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
    return out;
}

template AdamResult<float> adam_step(const Tensor<float>&, const Tensor<float>&, const AdamState<float>&, double,
                                     const AdamHyper&);
template AdamResult<double> adam_step(const Tensor<double>&, const Tensor<double>&, const AdamState<double>&, double,
                                      const AdamHyper&);

void LrSchedule::validate() const {
    if (total_epochs == 0) throw ConfigError("lr schedule: total_epochs must be positive");
    if (constant_epochs > total_epochs) throw ConfigError("lr schedule: constant_epochs exceeds total_epochs");
    if (lr_final > lr0) throw ConfigError("lr schedule: lr_final exceeds lr0");
}

double lr_at(std::size_t epoch, const LrSchedule& s) {
    if (epoch >= s.total_epochs)
        throw RangeError("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(s.total_epochs));
    if (epoch < s.constant_epochs) return s.lr0;
    const std::size_t last = s.total_epochs - 1;
    if (last == s.constant_epochs) return s.lr_final;
    const double frac = static_cast<double>(epoch - s.constant_epochs) / static_cast<double>(last - s.constant_epochs);
    return s.lr0 + frac * (s.lr_final - s.lr0);
}

}  // namespace bpp
