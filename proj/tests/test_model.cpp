#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bpp/checkpoint.hpp"
#include "bpp/model.hpp"
#include "bpp/sites.hpp"
#include "oracles.hpp"

using namespace bpp;

namespace {

ModelConfig small(std::size_t ch = 4, std::size_t m = 2, std::size_t R = 1, bool bias = true,
                  Downscale ds = Downscale::strided_conv) {
    ModelConfig c;
    c.ch = ch;
    c.m = m;
    c.R = R;
    c.bias = bias;
    c.ds = ds;
    return c;
}

// Graph of the network assembled from primitives.
TensorF compose(const Model& model, const TensorF& x) {
    const auto& c = model.config;
    TensorF t;
    switch (c.ds) {
        case Downscale::strided_conv: t = conv2d_forward(x, model.layers[0].conv); break;
        case Downscale::space_to_depth: t = conv2d_forward(space_to_depth(x, 2), model.layers[0].conv); break;
        case Downscale::haar_dwt: t = conv2d_forward(haar_dwt_down(x), model.layers[0].conv); break;
    }
    t = activation(t, c.act);
    for (std::size_t r = 0; r < c.R; ++r) {
        TensorF h = t;
        for (std::size_t i = 0; i < c.m; ++i) {
            h = conv2d_forward(h, model.layers[model.block_index(r, i)].conv);
            if (i + 1 < c.m) h = activation(h, c.act);
        }
        t = activation(add(t, h), c.act);
    }
    return clamp01(depth_to_space(conv2d_forward(t, model.layers.back().conv), 6));
}

double max_abs_diff(const TensorF& a, const TensorF& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
    return m;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("parameter accounting") {
    ModelConfig c = small(32, 2, 1, false);
    CHECK(parameter_count(c) == 3 * 32 * 9 + 2 * 32 * 32 * 9 + 32 * 108 * 9);
    CHECK(parameter_count(c) == 50400);
    CHECK(build(c, 1).parameter_count() == 50400);
    c.bias = true;
    CHECK(parameter_count(c) == 50400 + 32 + 32 + 32 + 108);

    for (std::size_t ch : {1, 3, 7})
        for (std::size_t m : {1, 2, 3})
            for (std::size_t R : {1, 2})
                for (bool bias : {false, true})
                    for (auto ds : {Downscale::strided_conv, Downscale::space_to_depth, Downscale::haar_dwt}) {
                        const ModelConfig g = small(ch, m, R, bias, ds);
                        const Model model = build(g, 0);
                        std::size_t n = 0;
                        for (const auto& l : model.layers) n += l.conv.weight.numel() + (l.conv.bias ? l.conv.bias->size() : 0);
                        CHECK(parameter_count(g) == n);
                    }
}

TEST_CASE("config validation and json") {
    CHECK_THROWS_AS(small(0).validate(), ConfigError);
    CHECK_THROWS_AS(small(4, 0).validate(), ConfigError);
    CHECK_THROWS_AS(small(4, 2, 0).validate(), ConfigError);
    const ModelConfig c = small(6, 3, 2, true, Downscale::haar_dwt);
    CHECK(config_from_json(config_to_json(c)) == c);
    auto j = config_to_json(c);
    j["colour"] = 1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"net_scale", 4}}), ConfigError);
    CHECK(config_from_json({{"ds", "s2d"}, {"act", "relu"}}).ds == Downscale::space_to_depth);
}

TEST_CASE("build is deterministic") {
    const ModelConfig c = small(5, 2, 2);
    const Model a = build(c, 42), b = build(c, 42), d = build(c, 43);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].conv.weight == b.layers[i].conv.weight);
        CHECK(*a.layers[i].conv.bias == *b.layers[i].conv.bias);
    }
    CHECK(!(a.layers[1].conv.weight == d.layers[1].conv.weight));
    CHECK(a.layers[0].name == "ds");
    CHECK(a.layers[1].name == "block0.conv0");
    CHECK(a.layers[4].name == "block1.conv1");
    CHECK(a.layers.back().name == "tail");
    CHECK(a.layers.back().conv.weight.shape() == Shape{108, 5, 3, 3});
}

TEST_CASE("forward shape contract") {
    const Model m = build(small(4), 1);
    CHECK(forward(m, TensorF(Shape{1, 3, 240, 426}, 0.5f)).shape() == Shape{1, 3, 720, 1278});
    CHECK(forward(m, TensorF(Shape{2, 3, 6, 10}, 0.5f)).shape() == Shape{2, 3, 18, 30});
    CHECK_THROWS_AS(forward(m, TensorF(Shape{1, 3, 7, 8})), ShapeError);
    CHECK_THROWS_AS(forward(m, TensorF(Shape{1, 3, 8, 5})), ShapeError);
    CHECK_THROWS_AS(forward(m, TensorF(Shape{1, 1, 8, 8})), ShapeError);
}

TEST_CASE("zero parameters give a zero output") {
    const Model z = zeros_like(small(4, 2, 1, false));
    std::mt19937_64 rng(1);
    const TensorF y = forward(z, oracle::random_tensor<float>(Shape{1, 3, 6, 6}, rng, 0, 1), Mode::train);
    for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("forward equals the composed primitives") {
    std::mt19937_64 rng(2);
    for (auto ds : {Downscale::strided_conv, Downscale::space_to_depth, Downscale::haar_dwt})
        for (std::size_t m : {1, 2, 3}) {
            const Model model = build(small(5, m, 2, true, ds), 10 + m);
            const TensorF x = oracle::random_tensor<float>(Shape{2, 3, 8, 10}, rng, 0, 1);
            CHECK(max_abs_diff(forward(model, x), compose(model, x)) <= 1e-6);
        }
}

TEST_CASE("eval output is clamped, train output is not") {
    Model m = build(small(4), 3);
    for (auto& v : m.layers.back().conv.weight.data()) v *= 50.0f;
    std::mt19937_64 rng(3);
    const TensorF x = oracle::random_tensor<float>(Shape{1, 3, 6, 6}, rng, 0, 1);
    const TensorF ye = forward(m, x, Mode::eval), yt = forward(m, x, Mode::train);
    bool outside = false;
    for (float v : yt.data()) outside |= v < 0.0f || v > 1.0f;
    CHECK(outside);
    for (float v : ye.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("model backward agrees with finite differences") {
    // binary32 model, so only a loose check; the double-precision operator
    // checks live in the tensor-core tests.
    for (auto ds : {Downscale::strided_conv, Downscale::space_to_depth, Downscale::haar_dwt}) {
        const Model model = build(small(3, 2, 2, true, ds), 4);
        std::mt19937_64 rng(5);
        const TensorF x = oracle::random_tensor<float>(Shape{2, 3, 4, 6}, rng, 0, 1);
        const ForwardTrace tr = forward_train(model, x);
        const TensorF g = oracle::random_tensor<float>(tr.output.shape(), rng);
        const auto grads = backward(model, tr, g);
        auto objective = [&](const Model& mm) {
            const TensorF y = forward_train(mm, x).output;
            double s = 0;
            for (std::size_t i = 0; i < y.numel(); ++i) s += double(y.data()[i]) * g.data()[i];
            return s;
        };
        // Central differences at two step sizes; entries where they disagree
        // straddle an activation kink and are skipped.
        std::vector<double> an, fd;
        std::size_t probed = 0, skipped = 0;
        auto probe = [&](double analytic, const Model& a, const Model& b, float& sa, float& sb) {
            double d[2];
            for (int t = 0; t < 2; ++t) {
                const float e = t == 0 ? 5e-4f : 2.5e-4f;
                const float keep = sa;
                sa = keep + e;
                sb = keep - e;
                d[t] = (objective(a) - objective(b)) / (double(sa) - double(sb));
                sa = sb = keep;
            }
            ++probed;
            if (std::abs(d[0] - d[1]) > 0.02 * std::max(std::abs(d[0]), 1e-2)) {
                ++skipped;
                return;
            }
            fd.push_back(d[0]);
            an.push_back(analytic);
        };
        for (std::size_t li = 0; li < model.layers.size(); ++li) {
            Model a = model, b = model;
            for (std::size_t k = 0; k < model.layers[li].conv.weight.numel(); k += 7)
                probe(grads[li].weight.data()[k], a, b, a.layers[li].conv.weight.data()[k],
                      b.layers[li].conv.weight.data()[k]);
            for (std::size_t k = 0; k < model.layers[li].conv.bias->size(); ++k)
                probe((*grads[li].bias)[k], a, b, (*a.layers[li].conv.bias)[k], (*b.layers[li].conv.bias)[k]);
        }
        CHECK(skipped * 10 <= probed);
        CHECK(oracle::rel_error(an, fd) < 2e-2);
    }
}

TEST_CASE("strip_bias") {
    const Model b = build(small(32, 2, 1, true), 6);
    const Model nb = strip_bias(b);
    CHECK(!nb.config.bias);
    CHECK(b.parameter_count() - nb.parameter_count() == 204);
    Model zeroed = b;
    for (auto& l : zeroed.layers) std::fill(l.conv.bias->begin(), l.conv.bias->end(), 0.0f);
    std::mt19937_64 rng(7);
    const TensorF x = oracle::random_tensor<float>(Shape{1, 3, 6, 8}, rng, 0, 1);
    CHECK(forward(nb, x) == forward(zeroed, x));
}

TEST_CASE("masking and compaction") {
    const Model m = build(small(4), 8);
    std::mt19937_64 rng(9);
    const TensorF x = oracle::random_tensor<float>(Shape{2, 3, 6, 6}, rng, 0, 1);
    CHECK(forward(apply_mask(m, {}), x) == forward(m, x));
    CHECK(forward(compact(m, {}), x) == forward(m, x));

    const auto sites = enumerate_sites(m);
    REQUIRE(sites.size() == 2);
    CHECK(sites[0].width == 4);
    const std::vector<PruneMask> masks{{0, {1}}, {1, {0, 3}}};
    const Model masked = apply_mask(m, masks), packed = compact(m, masks);
    CHECK(packed.config.ch == 3);
    CHECK(packed.config.inner == std::vector<std::size_t>{2});
    CHECK(packed.layer("block0.conv0").conv.weight.shape() == Shape{2, 3, 3, 3});
    CHECK(max_abs_diff(forward(masked, x), forward(packed, x)) <= 1e-6);

    CHECK_THROWS_AS(apply_mask(m, {{0, {0, 1, 2, 3}}}), ConfigError);
    CHECK_THROWS_AS(apply_mask(m, {{5, {0}}}), ConfigError);
    CHECK_THROWS_AS(apply_mask(m, {{0, {7}}}), ConfigError);

    const Model wide = build(small(34), 1);
    CHECK(compact(wide, {{0, {3, 20}}}).config.ch == 32);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "bpp_test_model";
    std::filesystem::create_directories(dir);
    const Model m = build(small(32, 2, 1, true), 11);
    CheckpointMeta meta;
    meta.id = "B";
    meta.stage = "pruned→finetuned";
    meta.epochs_trained = 12;
    meta.seed = 99;
    meta.best_val_psnr_y = 30.5;
    const Checkpoint ck = to_checkpoint(m, meta);
    CHECK(ck.tensors.size() == 8);
    CHECK(to_checkpoint(strip_bias(m), meta).tensors.size() == 4);
    CHECK(ck.tensors[1].name == "ds.bias");
    CHECK(ck.tensors[1].tensor.shape() == Shape{1, 32, 1, 1});

    save(ck, dir / "a.bpp");
    const Checkpoint back = load(dir / "a.bpp");
    CHECK(back.config == ck.config);
    CHECK(back.meta == ck.meta);
    REQUIRE(back.tensors.size() == ck.tensors.size());
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == ck.tensors[i].name);
        CHECK(back.tensors[i].tensor == ck.tensors[i].tensor);
    }
    save(back, dir / "b.bpp");
    CHECK(file_bytes(dir / "a.bpp") == file_bytes(dir / "b.bpp"));
    const Model restored = from_checkpoint(back);
    std::mt19937_64 rng(12);
    const TensorF x = oracle::random_tensor<float>(Shape{1, 3, 6, 6}, rng, 0, 1);
    CHECK(forward(restored, x) == forward(m, x));
    CHECK_THROWS_AS(load(dir / "missing.bpp"), IoError);
}

TEST_CASE("checkpoint corruption is located") {
    const Checkpoint ck = to_checkpoint(build(small(4), 1), CheckpointMeta{});
    const auto bytes = serialize_checkpoint(ck);
    REQUIRE(bytes.size() > 32);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BPP1");

    auto bad = bytes;
    bad[0] = 'X';
    try {
        parse_checkpoint(bad);
        FAIL("no throw");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    bad = bytes;
    bad[4] = 9;
    try {
        parse_checkpoint(bad);
        FAIL("no throw");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 4);
    }
    bad.assign(bytes.begin(), bytes.end() - 10);
    try {
        parse_checkpoint(bad);
        FAIL("no throw");
    } catch (const FormatError& e) {
        CHECK(e.offset() == bad.size());
    }
    bad.assign(bytes.begin(), bytes.begin() + 10);
    CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);

    Checkpoint wrong = ck;
    wrong.tensors[0].name = "head.weight";
    CHECK_THROWS_AS(from_checkpoint(wrong), ConfigError);
    CHECK_THROWS_AS(validate_stage_tag("stage1→distilled"), ConfigError);
    CHECK_NOTHROW(validate_stage_tag("debias→finetuned"));
}

TEST_CASE("partial load") {
    const Model src = build(small(4, 2, 1, true), 1);
    const Checkpoint ck = to_checkpoint(src, CheckpointMeta{});
    const PartialLoad same = load_partial(ck, src.config, 5);
    CHECK(same.initialized.empty());
    CHECK(same.dropped.empty());
    CHECK(same.copied.size() == 8);

    const Model m4 = build(small(4, 4, 1, true), 2);
    const PartialLoad p = load_partial(to_checkpoint(m4, CheckpointMeta{}), small(4, 2, 1, true), 5);
    CHECK(p.model.layer("block0.conv0").conv.weight == m4.layer("block0.conv0").conv.weight);
    CHECK(p.model.layer("tail").conv.weight == m4.layer("tail").conv.weight);
    const std::vector<std::string> dropped{"block0.conv2.weight", "block0.conv2.bias", "block0.conv3.weight",
                                           "block0.conv3.bias"};
    CHECK(p.dropped == dropped);
    CHECK(p.initialized.empty());

    const Model r2 = build(small(4, 2, 2, true), 3);
    const PartialLoad q = load_partial(to_checkpoint(r2, CheckpointMeta{}), small(4, 2, 1, true), 5);
    CHECK(q.dropped.size() == 4);
    for (const auto& name : q.dropped) CHECK(name.rfind("block1.", 0) == 0);

    const PartialLoad wider = load_partial(ck, small(6, 2, 1, true), 5);
    CHECK(wider.copied == std::vector<std::string>{"tail.bias"});  // 108 outputs regardless of ch
    CHECK(wider.initialized.size() == 7);
}

TEST_CASE("initialisation is fan-in scaled uniform") {
    ModelConfig c;
    c.ch = 34;
    c.bias = true;
    const Model m = build(c, 17);
    for (const auto& l : m.layers) {
        const Shape s = l.conv.weight.shape();
        const double bound = 1.0 / std::sqrt(double(s.c * s.h * s.w));
        double sq = 0;
        for (float w : l.conv.weight.data()) {
            CHECK(std::abs(w) <= bound);
            sq += double(w) * w;
        }
        // variance of U(-b, b) is b^2 / 3
        CHECK(sq / double(l.conv.weight.numel()) == doctest::Approx(bound * bound / 3).epsilon(0.1));
        for (float b : *l.conv.bias) CHECK(std::abs(b) <= bound);
    }
}
