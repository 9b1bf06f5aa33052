#include <doctest.h>

#include <cmath>
#include <limits>

#include "bpp/ops.hpp"
#include "bpp/optim.hpp"
#include "oracles.hpp"

using namespace bpp;

TEST_CASE("tensor rejects mismatched data length") {
    CHECK_THROWS_AS(TensorF(Shape{1, 2, 2, 2}, std::vector<float>(7)), ShapeError);
    TensorF t(Shape{2, 3, 4, 5});
    CHECK(t.numel() == 120);
    t.at(1, 2, 3, 4) = 7;
    CHECK(t.data()[119] == 7);
}

TEST_CASE("slice and concat along batch") {
    std::mt19937_64 rng(1);
    const TensorF a = oracle::random_tensor<float>(Shape{2, 3, 4, 4}, rng);
    const TensorF b = oracle::random_tensor<float>(Shape{1, 3, 4, 4}, rng);
    const std::vector<TensorF> parts{a, b};
    const TensorF c = concat_batch<float>(parts);
    CHECK(c.shape() == Shape{3, 3, 4, 4});
    CHECK(slice_batch(c, 0, 2) == a);
    CHECK(slice_batch(c, 2, 1) == b);
    const std::vector<TensorF> bad{a, TensorF(Shape{1, 3, 4, 5})};
    CHECK_THROWS_AS(concat_batch<float>(bad), ShapeError);
}

TEST_CASE("conv of ones counts overlaps") {
    ConvParams<double> p;
    p.weight = TensorD(Shape{1, 1, 3, 3}, 1.0);
    p.bias = std::vector<double>{0.0};
    p.pad = 1;
    const TensorD y = conv2d_forward(TensorD(Shape{1, 1, 3, 3}, 1.0), p);
    CHECK(y.at(0, 0, 1, 1) == 9);
    CHECK(y.at(0, 0, 0, 1) == 6);
    CHECK(y.at(0, 0, 1, 0) == 6);
    CHECK(y.at(0, 0, 0, 0) == 4);
    CHECK(y.at(0, 0, 2, 2) == 4);
}

TEST_CASE("delta kernel is the identity") {
    std::mt19937_64 rng(2);
    const TensorD x = oracle::random_tensor(Shape{2, 1, 5, 6}, rng);
    ConvParams<double> p;
    p.weight = TensorD(Shape{1, 1, 3, 3});
    p.weight.at(0, 0, 1, 1) = 1;
    p.pad = 1;
    CHECK(conv2d_forward(x, p) == x);
}

TEST_CASE("conv matches the loop oracle over stride and padding") {
    std::mt19937_64 rng(3);
    for (std::size_t stride : {1, 2})
        for (std::size_t pad : {0, 1})
            for (std::size_t k : {1, 3}) {
                ConvParams<double> p;
                p.weight = oracle::random_tensor(Shape{3, 2, k, k}, rng);
                p.bias = oracle::to_vec(oracle::random_tensor(Shape{1, 3, 1, 1}, rng));
                p.stride = stride;
                p.pad = pad;
                p.floor_output = true;
                const TensorD x = oracle::random_tensor(Shape{2, 2, 7, 6}, rng);
                const TensorD want = oracle::conv_loops(x, p);
                const TensorD got = conv2d_forward(x, p);
                REQUIRE(got.shape() == want.shape());
                double worst = 0;
                for (std::size_t i = 0; i < got.numel(); ++i)
                    worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]));
                CHECK(worst <= 1e-12);
            }
}

TEST_CASE("worked example: 1x2x5x5, 3x2x3x3, s=2, p=1") {
    std::mt19937_64 rng(4);
    ConvParams<double> p;
    p.weight = oracle::random_tensor(Shape{3, 2, 3, 3}, rng);
    p.stride = 2;
    p.pad = 1;
    const TensorD x = oracle::random_tensor(Shape{1, 2, 5, 5}, rng);
    const TensorD y = conv2d_forward(x, p);
    CHECK(y.shape() == Shape{1, 3, 3, 3});
    const TensorD want = oracle::conv_loops(x, p);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.data()[i] - want.data()[i]) <= 1e-12);
}

TEST_CASE("conv shape errors") {
    ConvParams<double> p;
    p.weight = TensorD(Shape{1, 2, 3, 3});
    CHECK_THROWS_AS(conv2d_forward(TensorD(Shape{1, 3, 5, 5}), p), ShapeError);
    p.weight = TensorD(Shape{1, 1, 3, 3});
    p.stride = 2;
    p.pad = 1;
    CHECK_THROWS_AS(conv2d_forward(TensorD(Shape{1, 1, 4, 4}), p), ShapeError);  // (4+2-3)/2 is fractional
    p.floor_output = true;
    CHECK(conv2d_forward(TensorD(Shape{1, 1, 4, 4}), p).shape() == Shape{1, 1, 2, 2});
    p.floor_output = false;
    const TensorD x(Shape{1, 1, 5, 5});
    CHECK_THROWS_AS(conv2d_backward(x, p, TensorD(Shape{1, 1, 2, 2})), ShapeError);
}

TEST_CASE("conv backward trivial cases") {
    ConvParams<double> p;
    p.weight = TensorD(Shape{1, 1, 1, 1}, 3.0);
    p.bias = std::vector<double>{0.5};
    const TensorD x(Shape{1, 1, 1, 1}, 2.0);
    const auto g = conv2d_backward(x, p, TensorD(Shape{1, 1, 1, 1}, 5.0));
    CHECK(g.grad_x.data()[0] == 15.0);
    CHECK(g.grad_w.data()[0] == 10.0);
    CHECK((*g.grad_b)[0] == 5.0);

    std::mt19937_64 rng(5);
    ConvParams<double> q;
    q.weight = oracle::random_tensor(Shape{2, 2, 3, 3}, rng);
    q.pad = 1;
    const TensorD xx = oracle::random_tensor(Shape{1, 2, 4, 4}, rng);
    const auto z = conv2d_backward(xx, q, TensorD(Shape{1, 2, 4, 4}));
    for (double v : z.grad_x.data()) CHECK(v == 0.0);
    for (double v : z.grad_w.data()) CHECK(v == 0.0);
    CHECK(!z.grad_b.has_value());
}

TEST_CASE("backward operators match central differences") {
    for (std::size_t i = 0; i < 27; ++i) {
        const auto c = oracle::gradient_case(i, 11);
        INFO(c.label);
        CHECK(c.rel_error < 1e-6);
    }
}

TEST_CASE("float conv agrees with double conv") {
    std::mt19937_64 rng(6);
    ConvParams<double> pd;
    pd.weight = oracle::random_tensor(Shape{4, 3, 3, 3}, rng);
    pd.bias = oracle::to_vec(oracle::random_tensor(Shape{1, 4, 1, 1}, rng));
    pd.pad = 1;
    const TensorD xd = oracle::random_tensor(Shape{2, 3, 6, 6}, rng);
    ConvParams<float> pf;
    pf.weight = pd.weight.cast<float>();
    pf.bias = std::vector<float>(pd.bias->begin(), pd.bias->end());
    pf.pad = 1;
    const TensorF yf = conv2d_forward(xd.cast<float>(), pf);
    const TensorD yd = conv2d_forward(xd, pd);
    for (std::size_t i = 0; i < yf.numel(); ++i) CHECK(std::abs(yf.data()[i] - yd.data()[i]) < 1e-5);
}

TEST_CASE("batch-parallel conv is bit-identical to sequential") {
    std::mt19937_64 rng(7);
    ConvParams<float> p;
    p.weight = oracle::random_tensor<float>(Shape{5, 3, 3, 3}, rng);
    p.bias = std::vector<float>(5, 0.1f);
    p.pad = 1;
    const TensorF x = oracle::random_tensor<float>(Shape{6, 3, 8, 8}, rng);
    const TensorF gy = oracle::random_tensor<float>(Shape{6, 5, 8, 8}, rng);
    set_num_threads(1);
    const auto y1 = conv2d_forward(x, p);
    const auto g1 = conv2d_backward(x, p, gy);
    set_num_threads(3);
    const auto y3 = conv2d_forward(x, p);
    const auto g3 = conv2d_backward(x, p, gy);
    set_num_threads(1);
    CHECK(y1 == y3);
    CHECK(g1.grad_x == g3.grad_x);
    CHECK(g1.grad_w == g3.grad_w);
    CHECK(*g1.grad_b == *g3.grad_b);
}

TEST_CASE("activations") {
    const TensorD x(Shape{1, 1, 1, 3}, std::vector<double>{-1, 0, 2});
    const TensorD y = activation(x, {ActKind::leaky_relu, 0.1});
    CHECK(y.data()[0] == doctest::Approx(-0.1));
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[2] == 2.0);
    const TensorD neg(Shape{1, 2, 2, 2}, -3.0);
    const TensorD zeroed = activation(neg, {ActKind::relu, 0});
    for (double v : zeroed.data()) CHECK(v == 0.0);
    const TensorD g = activation_grad(x, TensorD(Shape{1, 1, 1, 3}, 1.0), {ActKind::leaky_relu, 0.1});
    CHECK(g.data()[0] == doctest::Approx(0.1));
    CHECK(g.data()[1] == 1.0);  // positive branch at the kink
}

TEST_CASE("depth_to_space layout and inverse") {
    const TensorD x(Shape{1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
    const TensorD y = depth_to_space(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.data()[0] == 1);
    CHECK(y.data()[1] == 2);
    CHECK(y.data()[2] == 3);
    CHECK(y.data()[3] == 4);

    std::mt19937_64 rng(8);
    const TensorF big = oracle::random_tensor<float>(Shape{2, 108, 5, 5}, rng);
    const TensorF up = depth_to_space(big, 6);
    CHECK(up.shape() == Shape{2, 3, 30, 30});
    CHECK(space_to_depth(up, 6) == big);
    const TensorF img = oracle::random_tensor<float>(Shape{1, 3, 8, 6}, rng);
    CHECK(depth_to_space(space_to_depth(img, 2), 2) == img);

    CHECK_THROWS_AS(depth_to_space(TensorF(Shape{1, 5, 2, 2}), 2), ShapeError);
    CHECK_THROWS_AS(space_to_depth(TensorF(Shape{1, 1, 5, 4}), 2), ShapeError);
}

TEST_CASE("haar analysis") {
    const TensorD block(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const TensorD h = haar_dwt_down(block);
    REQUIRE(h.shape() == Shape{1, 4, 1, 1});
    CHECK(h.data()[0] == doctest::Approx(5));
    CHECK(h.data()[1] == doctest::Approx(-1));
    CHECK(h.data()[2] == doctest::Approx(-2));
    CHECK(h.data()[3] == doctest::Approx(0));

    const TensorD flat(Shape{1, 2, 4, 4}, 0.25);
    const TensorD hf = haar_dwt_down(flat);
    for (std::size_t c = 0; c < 2; ++c) {
        for (double v : hf.plane(0, 4 * c)) CHECK(v == doctest::Approx(0.5));
        for (std::size_t b = 1; b < 4; ++b)
            for (double v : hf.plane(0, 4 * c + b)) CHECK(v == 0.0);
    }

    std::mt19937_64 rng(9);
    const TensorD x = oracle::random_tensor(Shape{2, 3, 6, 8}, rng);
    const TensorD y = haar_dwt_down(x);
    const double nx = oracle::dot(x.data(), x.data()), ny = oracle::dot(y.data(), y.data());
    CHECK(std::abs(std::sqrt(ny) - std::sqrt(nx)) / std::sqrt(nx) <= 1e-10);
    CHECK(oracle::rel_error(haar_dwt_up(y).data(), x.data()) < 1e-14);
    CHECK_THROWS_AS(haar_dwt_down(TensorD(Shape{1, 1, 3, 4})), ShapeError);
}

TEST_CASE("adam") {
    const Shape s{1, 1, 1, 1};
    const auto st = AdamState<double>::zeros(s);
    const auto r = adam_step(TensorD(s, 0.0), TensorD(s, 1.0), st, 1e-3, {0.99, 0.999, 1e-8});
    CHECK(r.param.data()[0] == doctest::Approx(-9.99999990e-4).epsilon(1e-9));
    CHECK(r.state.step == 1);

    const auto z = adam_step(TensorD(s, 0.7), TensorD(s, 0.0), st, 1e-3);
    CHECK(z.param.data()[0] == 0.7);

    auto a = adam_step(TensorD(s, 0.0), TensorD(s, 1.0), st, 1e-3);
    auto b = adam_step(a.param, TensorD(s, 1.0), a.state, 1e-3);
    CHECK(a.param.data()[0] < 0.0);
    CHECK(b.param.data()[0] < a.param.data()[0]);

    CHECK_THROWS_AS(adam_step(TensorD(s, 0.0), TensorD(s, std::numeric_limits<double>::quiet_NaN()), st, 1e-3),
                    NumericError);
    CHECK_THROWS_AS(adam_step(TensorD(s, 0.0), TensorD(s, std::numeric_limits<double>::infinity()), st, 1e-3),
                    NumericError);
}

TEST_CASE("learning-rate schedule") {
    const LrSchedule s;
    CHECK(lr_at(0, s) == 5e-4);
    CHECK(lr_at(499, s) == 5e-4);
    CHECK(lr_at(999, s) == doctest::Approx(1e-8).epsilon(1e-9));
    CHECK(lr_at(750, s) == doctest::Approx(5e-4 + (250.0 / 499.0) * (1e-8 - 5e-4)).epsilon(1e-12));
    CHECK(lr_at(750, s) == doctest::Approx(2.4950e-4).epsilon(1e-4));
    double prev = lr_at(0, s);
    for (std::size_t e = 1; e < 1000; ++e) {
        const double cur = lr_at(e, s);
        CHECK(cur <= prev);
        prev = cur;
    }
    CHECK_THROWS_AS(lr_at(1000, s), RangeError);
    LrSchedule bad;
    bad.constant_epochs = 1001;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
