#include <doctest.h>

#include <chrono>
#include <sstream>

#include "bpp/bench.hpp"

using namespace bpp;

namespace {

void busy_wait_ms(double ms) {
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double, std::milli>(ms);
    while (std::chrono::steady_clock::now() < until) {
    }
}

ModelConfig small_config() {
    ModelConfig c;
    c.ch = 6;
    c.bias = true;
    return c;
}

}  // namespace

TEST_CASE("percentile interpolates linearly") {
    CHECK(percentile({3, 1, 2}, 0.5) == 2.0);
    CHECK(percentile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(percentile({10, 20}, 0.1) == doctest::Approx(11.0));
    CHECK(percentile({7}, 0.9) == 7.0);
    CHECK(percentile({1, 5}, 0.0) == 1.0);
    CHECK(percentile({1, 5}, 1.0) == 5.0);
    CHECK_THROWS_AS(percentile({}, 0.5), RangeError);
}

TEST_CASE("busy-wait stub times near 5 ms") {
    int calls = 0;
    const RuntimeStats st = measure_runtime(
        [&](const TensorF&) {
            ++calls;
            busy_wait_ms(5.0);
        },
        Shape{1, 3, 8, 8}, BenchOptions{2, 9, 0});
    CHECK(calls == 11);
    CHECK(st.per_iter_ms.size() == 9);
    CHECK(st.warmup == 2);
    CHECK(st.iters == 9);
    CHECK(st.median_ms >= 4.5);
    CHECK(st.median_ms <= 8.0);
    CHECK(st.p10_ms <= st.median_ms);
    CHECK(st.median_ms <= st.p90_ms);
    CHECK(st.input == Shape{1, 3, 8, 8});
}

TEST_CASE("warmup calls are excluded and the input is reused") {
    std::vector<double> firsts;
    const RuntimeStats st = measure_runtime(
        [&](const TensorF& x) {
            firsts.push_back(x.data()[0]);
            // slow warmup calls must not leak into the statistics
            if (firsts.size() <= 3) busy_wait_ms(30.0);
        },
        Shape{1, 3, 4, 4}, BenchOptions{3, 5, 1});
    CHECK(st.per_iter_ms.size() == 5);
    CHECK(st.p90_ms < 20.0);
    for (double v : firsts) CHECK(v == firsts.front());
    CHECK_THROWS_AS(measure_runtime([](const TensorF&) {}, Shape{1, 3, 4, 4}, BenchOptions{0, 4, 0}), RangeError);
}

TEST_CASE("model timing at 720p produces a 4K frame") {
    const Model m = build(small_config(), 1);
    const TensorF y = forward(m, TensorF(Shape{1, 3, 720, 1280}, 0.5f));
    CHECK(y.shape() == Shape{1, 3, 2160, 3840});
    const RuntimeStats st = measure_runtime(m, Shape{1, 3, 36, 60}, BenchOptions{1, 5, 0});
    CHECK(st.per_iter_ms.size() == 5);
    CHECK(st.median_ms > 0);
    CHECK(st.dtype == DType::f32);
    CHECK(st.threads == num_threads());
    CHECK_THROWS_AS(measure_runtime(m, Shape{1, 3, 35, 60}, BenchOptions{1, 5, 0}), ShapeError);
}

TEST_CASE("channel sweep normalisation and CSV") {
    const Shape in{1, 3, 48, 64};
    const auto rows = channel_sweep(small_config(), {6, 65}, in, BenchOptions{1, 5, 0});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ch == 6);
    CHECK(rows[0].normalized == 0.0);
    CHECK(rows[1].normalized == 1.0);
    CHECK(rows[1].median_ms > rows[0].median_ms);

    const auto four = channel_sweep(small_config(), {6, 16, 32, 65}, in, BenchOptions{1, 5, 0});
    CHECK(four.size() == 4);
    CHECK(four.front().normalized == 0.0);
    CHECK(four.back().normalized == 1.0);

    std::ostringstream one, many;
    write_sweep_csv(one, rows, 1);
    write_sweep_csv(many, rows, 4);
    std::istringstream a(one.str()), b(many.str());
    std::string line;
    std::getline(a, line);
    CHECK(line == kSweepCsvHeader);
    std::size_t n = 0;
    while (std::getline(a, line)) ++n;
    CHECK(n == 2);
    std::getline(b, line);
    CHECK(line == "# threads=4");
    std::getline(b, line);
    CHECK(line == kSweepCsvHeader);

    CHECK_THROWS_AS(channel_sweep(small_config(), {6}, in), ConfigError);
    CHECK_THROWS_AS(channel_sweep(small_config(), {16, 6}, in), ConfigError);
}

TEST_CASE("sweep medians repeat within timing noise") {
    const Shape in{1, 3, 96, 96};
    const auto a = channel_sweep(small_config(), {6, 32}, in, BenchOptions{2, 9, 3});
    const auto b = channel_sweep(small_config(), {6, 32}, in, BenchOptions{2, 9, 3});
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double rel = std::abs(a[i].median_ms - b[i].median_ms) / a[i].median_ms;
        CHECK_MESSAGE(rel <= 0.2, "ch " << a[i].ch << ": " << a[i].median_ms << " vs " << b[i].median_ms << " ms");
    }
}
