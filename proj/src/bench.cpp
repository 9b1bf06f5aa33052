#include "bpp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>

namespace bpp {

double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw RangeError("percentile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

RuntimeStats measure_runtime(const std::function<void(const TensorF&)>& fn, const Shape& input,
                             const BenchOptions& opts) {
    if (opts.iters < 5) throw RangeError("measure_runtime needs at least 5 iterations");
    TensorF x(input);
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : x.data()) v = u(rng);

    for (std::size_t i = 0; i < opts.warmup; ++i) fn(x);

    RuntimeStats st;
    st.input = input;
    st.warmup = opts.warmup;
    st.iters = opts.iters;
    st.threads = num_threads();
    st.per_iter_ms.reserve(opts.iters);
    for (std::size_t i = 0; i < opts.iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn(x);
        const auto t1 = std::chrono::steady_clock::now();
        st.per_iter_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    st.median_ms = percentile(st.per_iter_ms, 0.5);
    st.p10_ms = percentile(st.per_iter_ms, 0.1);
    st.p90_ms = percentile(st.per_iter_ms, 0.9);
    return st;
}

RuntimeStats measure_runtime(const Model& model, const Shape& input, const BenchOptions& opts) {
    // Shape errors surface before any timing.
    (void)forward(model, TensorF(Shape{1, input.c, input.h, input.w}), Mode::eval);
    return measure_runtime([&](const TensorF& x) { (void)forward(model, x, Mode::eval); }, input, opts);
}

std::vector<SweepRow> channel_sweep(const ModelConfig& base, const std::vector<std::size_t>& ch_list, const Shape& input,
                                    const BenchOptions& opts) {
    if (ch_list.size() < 2) throw ConfigError("channel sweep needs at least two channel counts");
    if (!std::is_sorted(ch_list.begin(), ch_list.end())) throw ConfigError("channel sweep list must be ascending");
    std::vector<SweepRow> rows;
    for (std::size_t ch : ch_list) {
        ModelConfig cfg = base;
        cfg.ch = ch;
        cfg.inner.clear();
        const Model model = build(cfg, opts.seed + ch);
        const RuntimeStats st = measure_runtime(model, input, opts);
        rows.push_back({ch, st.median_ms, st.p10_ms, st.p90_ms, 0.0});
    }
    const double t0 = rows.front().median_ms, t1 = rows.back().median_ms;
    const double span = t1 - t0;
    for (auto& r : rows) r.normalized = span != 0.0 ? (r.median_ms - t0) / span : 0.0;
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, int threads) {
    if (threads > 1) os << "# threads=" << threads << "\n";
    os << kSweepCsvHeader << "\n";
    os << std::setprecision(9);
    for (const auto& r : rows)
        os << r.ch << "," << r.median_ms << "," << r.p10_ms << "," << r.p90_ms << "," << r.normalized << "\n";
}

}  // namespace bpp
