#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "bpp/model.hpp"

namespace bpp {

struct RuntimeStats {
    Shape input;
    std::size_t warmup = 0;
    std::size_t iters = 0;
    std::vector<double> per_iter_ms;  // post-warmup only
    double median_ms = 0;
    double p10_ms = 0;
    double p90_ms = 0;
    DType dtype = DType::f32;
    int threads = 1;
};

struct BenchOptions {
    std::size_t warmup = 3;
    std::size_t iters = 20;
    std::uint64_t seed = 0;
};

// Linear-interpolated percentile (q in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> v, double q);

// Times fn(x) on a fixed random input with a monotonic clock. Input
// generation happens before the first timed call.
RuntimeStats measure_runtime(const std::function<void(const TensorF&)>& fn, const Shape& input,
                             const BenchOptions& opts = {});
RuntimeStats measure_runtime(const Model& model, const Shape& input, const BenchOptions& opts = {});

struct SweepRow {
    std::size_t ch = 0;
    double median_ms = 0;
    double p10_ms = 0;
    double p90_ms = 0;
    double normalized = 0;  // (t - t(first)) / (t(last) - t(first))
};

// ch_list ascending, at least two entries; fresh random model per entry.
std::vector<SweepRow> channel_sweep(const ModelConfig& base, const std::vector<std::size_t>& ch_list, const Shape& input,
                                    const BenchOptions& opts = {});

inline constexpr const char* kSweepCsvHeader = "ch,median_ms,p10_ms,p90_ms,normalized";

// A "# threads=N" comment line precedes the header when threads > 1.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, int threads = 1);

}  // namespace bpp
