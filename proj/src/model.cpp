#include "bpp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace bpp {

std::string to_string(Downscale d) {
    switch (d) {
        case Downscale::strided_conv: return "strided_conv";
        case Downscale::space_to_depth: return "space_to_depth";
        case Downscale::haar_dwt: return "haar_dwt";
    }
    return "?";
}

Downscale parse_downscale(const std::string& s) {
    if (s == "strided_conv" || s == "sc") return Downscale::strided_conv;
    if (s == "space_to_depth" || s == "s2d") return Downscale::space_to_depth;
    if (s == "haar_dwt" || s == "dwt") return Downscale::haar_dwt;
    throw ConfigError("unknown downscale kind '" + s + "'");
}

std::string to_string(ActKind a) { return a == ActKind::relu ? "relu" : "leaky_relu"; }

ActKind parse_act(const std::string& s) {
    if (s == "relu") return ActKind::relu;
    if (s == "leaky_relu" || s == "lrelu") return ActKind::leaky_relu;
    throw ConfigError("unknown activation '" + s + "'");
}

std::size_t ModelConfig::inner_width(std::size_t block, std::size_t pos) const {
    if (inner.empty()) return ch;
    return inner.at(block * (m - 1) + pos);
}

void ModelConfig::validate() const {
    if (ch < 1 || m < 1 || R < 1) throw ConfigError("model config needs ch, m, R >= 1");
    if (!inner.empty()) {
        if (inner.size() != R * (m - 1))
            throw ConfigError("model config 'inner' must list " + std::to_string(R * (m - 1)) + " widths");
        if (std::any_of(inner.begin(), inner.end(), [](std::size_t w) { return w < 1; }))
            throw ConfigError("interior widths must be >= 1");
    }
    if (act.kind == ActKind::leaky_relu && !(act.slope >= 0.0 && act.slope < 1.0))
        throw ConfigError("leaky_relu slope must lie in [0, 1)");
}

bool ModelConfig::operator==(const ModelConfig& o) const {
    auto widths = [](const ModelConfig& c) {
        std::vector<std::size_t> w;
        for (std::size_t r = 0; r < c.R; ++r)
            for (std::size_t i = 0; i + 1 < c.m; ++i) w.push_back(c.inner_width(r, i));
        return w;
    };
    return ch == o.ch && m == o.m && R == o.R && ds == o.ds && act.kind == o.act.kind && act.slope == o.act.slope &&
           bias == o.bias && widths(*this) == widths(o);
}

nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j{{"ch", c.ch},
                     {"m", c.m},
                     {"R", c.R},
                     {"ds", to_string(c.ds)},
                     {"act", to_string(c.act.kind)},
                     {"slope", c.act.slope},
                     {"bias", c.bias},
                     {"net_scale", ModelConfig::net_scale},
                     {"down_factor", ModelConfig::down_factor},
                     {"up_factor", ModelConfig::up_factor}};
    if (!c.inner.empty()) j["inner"] = c.inner;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    static const std::set<std::string> known{"ch",   "m",    "R",         "ds",          "act",      "slope",
                                             "bias", "inner", "net_scale", "down_factor", "up_factor"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
    ModelConfig c;
    try {
        if (j.contains("ch")) c.ch = j.at("ch").get<std::size_t>();
        if (j.contains("m")) c.m = j.at("m").get<std::size_t>();
        if (j.contains("R")) c.R = j.at("R").get<std::size_t>();
        if (j.contains("ds")) c.ds = parse_downscale(j.at("ds").get<std::string>());
        if (j.contains("act")) c.act.kind = parse_act(j.at("act").get<std::string>());
        if (j.contains("slope")) c.act.slope = j.at("slope").get<double>();
        if (j.contains("bias")) c.bias = j.at("bias").get<bool>();
        if (j.contains("inner")) c.inner = j.at("inner").get<std::vector<std::size_t>>();
        if (j.contains("net_scale") && j.at("net_scale").get<std::size_t>() != ModelConfig::net_scale)
            throw ConfigError("net_scale is fixed at 3");
        if (j.contains("down_factor") && j.at("down_factor").get<std::size_t>() != ModelConfig::down_factor)
            throw ConfigError("down_factor is fixed at 2");
        if (j.contains("up_factor") && j.at("up_factor").get<std::size_t>() != ModelConfig::up_factor)
            throw ConfigError("up_factor is fixed at 6");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string block_conv_name(std::size_t block, std::size_t pos) {
    return "block" + std::to_string(block) + ".conv" + std::to_string(pos);
}

std::vector<LayerSpec> layer_specs(const ModelConfig& c) {
    c.validate();
    std::vector<LayerSpec> specs;
    if (c.ds == Downscale::strided_conv)
        specs.push_back({"ds", 3, c.ch, 3, 2, 1});
    else
        specs.push_back({"ds", 3 * ModelConfig::down_factor * ModelConfig::down_factor, c.ch, 1, 1, 0});
    for (std::size_t r = 0; r < c.R; ++r) {
        for (std::size_t i = 0; i < c.m; ++i) {
            const std::size_t cin = i == 0 ? c.ch : c.inner_width(r, i - 1);
            const std::size_t cout = i + 1 == c.m ? c.ch : c.inner_width(r, i);
            specs.push_back({block_conv_name(r, i), cin, cout, 3, 1, 1});
        }
    }
    specs.push_back({"tail", c.ch, 3 * ModelConfig::up_factor * ModelConfig::up_factor, 3, 1, 1});
    return specs;
}

std::size_t parameter_count(const ModelConfig& c) {
    std::size_t total = 0;
    for (const auto& s : layer_specs(c)) total += s.cout * s.cin * s.k * s.k + (c.bias ? s.cout : 0);
    return total;
}

std::size_t Model::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == name) return i;
    throw ConfigError("model has no layer '" + name + "'");
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto& l : layers) total += l.conv.weight.numel() + (l.conv.bias ? l.conv.bias->size() : 0);
    return total;
}

namespace {

Model make_model(const ModelConfig& config, std::mt19937_64* rng) {
    Model model;
    model.config = config;
    const auto specs = layer_specs(config);
    for (std::size_t li = 0; li < specs.size(); ++li) {
        const auto& s = specs[li];
        Layer layer;
        layer.name = s.name;
        layer.conv.weight = TensorF(Shape{s.cout, s.cin, s.k, s.k});
        layer.conv.stride = s.stride;
        layer.conv.pad = s.pad;
        layer.conv.floor_output = s.stride > 1;
        if (config.bias) layer.conv.bias = std::vector<float>(s.cout, 0.0f);
        if (rng) {
            // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike, the
            // common framework default. A He-scaled init trains ~1 dB worse here.
            const double bound = 1.0 / std::sqrt(static_cast<double>(s.cin * s.k * s.k));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (float& w : layer.conv.weight.data()) w = static_cast<float>(dist(*rng));
            if (layer.conv.bias)
                for (float& b : *layer.conv.bias) b = static_cast<float>(dist(*rng));
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

void check_input(const TensorF& x) {
    const Shape& s = x.shape();
    if (s.c != 3) throw ShapeError("model input must have 3 channels, got " + s.str());
    if (s.h == 0 || s.w == 0 || s.h % ModelConfig::down_factor != 0 || s.w % ModelConfig::down_factor != 0)
        throw ShapeError("model input spatial dims must be even and positive, got " + s.str());
}

TensorF head_input(const Model& model, const TensorF& x) {
    switch (model.config.ds) {
        case Downscale::strided_conv: return x;
        case Downscale::space_to_depth: return space_to_depth(x, ModelConfig::down_factor);
        case Downscale::haar_dwt: return haar_dwt_down(x);
    }
    return x;
}

}  // namespace

Model build(const ModelConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return make_model(config, &rng);
}

Model zeros_like(const ModelConfig& config) { return make_model(config, nullptr); }

ForwardTrace forward_train(const Model& model, const TensorF& x) {
    check_input(x);
    const ModelConfig& c = model.config;
    const Activation act = c.act;
    ForwardTrace tr;
    tr.conv_in.resize(model.layers.size());
    tr.conv_out.resize(model.layers.size());

    tr.conv_in[0] = head_input(model, x);
    tr.conv_out[0] = conv2d_forward(tr.conv_in[0], model.layers[0].conv);
    TensorF trunk = activation(tr.conv_out[0], act);

    for (std::size_t r = 0; r < c.R; ++r) {
        TensorF h = trunk;
        for (std::size_t i = 0; i < c.m; ++i) {
            const std::size_t li = model.block_index(r, i);
            tr.conv_in[li] = std::move(h);
            tr.conv_out[li] = conv2d_forward(tr.conv_in[li], model.layers[li].conv);
            if (i + 1 < c.m) h = activation(tr.conv_out[li], act);
        }
        tr.block_sum.push_back(add(trunk, tr.conv_out[model.block_index(r, c.m - 1)]));
        trunk = activation(tr.block_sum.back(), act);
    }

    const std::size_t ti = model.tail_index();
    tr.conv_in[ti] = std::move(trunk);
    tr.conv_out[ti] = conv2d_forward(tr.conv_in[ti], model.layers[ti].conv);
    tr.output = depth_to_space(tr.conv_out[ti], ModelConfig::up_factor);
    return tr;
}

TensorF forward(const Model& model, const TensorF& x, Mode mode) {
    check_input(x);
    const ModelConfig& c = model.config;
    TensorF t = activation(conv2d_forward(head_input(model, x), model.layers[0].conv), c.act);
    for (std::size_t r = 0; r < c.R; ++r) {
        TensorF h = t;
        for (std::size_t i = 0; i < c.m; ++i) {
            h = conv2d_forward(h, model.layers[model.block_index(r, i)].conv);
            if (i + 1 < c.m) h = activation(h, c.act);
        }
        t = activation(add(t, h), c.act);
    }
    TensorF y = depth_to_space(conv2d_forward(t, model.layers[model.tail_index()].conv), ModelConfig::up_factor);
    return mode == Mode::eval ? clamp01(y) : y;
}

std::vector<LayerGrad> backward(const Model& model, const ForwardTrace& tr, const TensorF& grad_out) {
    if (grad_out.shape() != tr.output.shape())
        throw ShapeError("backward: grad " + grad_out.shape().str() + " vs output " + tr.output.shape().str());
    const ModelConfig& c = model.config;
    std::vector<LayerGrad> grads(model.layers.size());
    auto store = [&](std::size_t li, ConvGrads<float>& g) {
        grads[li].weight = std::move(g.grad_w);
        grads[li].bias = std::move(g.grad_b);
    };

    const std::size_t ti = model.tail_index();
    TensorF g_tail = space_to_depth(grad_out, ModelConfig::up_factor);
    auto tg = conv2d_backward(tr.conv_in[ti], model.layers[ti].conv, g_tail);
    TensorF g_trunk = std::move(tg.grad_x);
    store(ti, tg);

    for (std::size_t r = c.R; r-- > 0;) {
        TensorF g_sum = activation_grad(tr.block_sum[r], g_trunk, c.act);
        TensorF g = g_sum;
        for (std::size_t i = c.m; i-- > 0;) {
            const std::size_t li = model.block_index(r, i);
            auto cg = conv2d_backward(tr.conv_in[li], model.layers[li].conv, g);
            store(li, cg);
            if (i > 0)
                g = activation_grad(tr.conv_out[li - 1], cg.grad_x, c.act);
            else
                g = std::move(cg.grad_x);
        }
        g_trunk = add(g_sum, g);
    }

    TensorF g_head = activation_grad(tr.conv_out[0], g_trunk, c.act);
    auto hg = conv2d_backward(tr.conv_in[0], model.layers[0].conv, g_head, false);
    store(0, hg);
    return grads;
}

namespace {

struct Keep {
    std::vector<std::vector<std::size_t>> out, in;  // per layer, dropped indices
};

Keep dropped_per_layer(const Model& model, const std::vector<PruneMask>& masks, std::vector<PruneSite>& sites) {
    sites = enumerate_sites(model);
    const auto merged = merge_masks(masks, sites);
    Keep k;
    k.out.resize(model.layers.size());
    k.in.resize(model.layers.size());
    for (const auto& mask : merged) {
        for (const auto& mem : sites[mask.site_id].members) {
            auto& dst = mem.axis == Axis::out_channels ? k.out[model.index_of(mem.layer)] : k.in[model.index_of(mem.layer)];
            dst = mask.drop;
        }
    }
    return k;
}

std::vector<std::size_t> complement(std::size_t width, const std::vector<std::size_t>& drop) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < width; ++i)
        if (!std::binary_search(drop.begin(), drop.end(), i)) keep.push_back(i);
    return keep;
}

}  // namespace

Model apply_mask(const Model& model, const std::vector<PruneMask>& masks) {
    std::vector<PruneSite> sites;
    const Keep k = dropped_per_layer(model, masks, sites);
    Model out = model;
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
        auto& conv = out.layers[li].conv;
        const Shape ws = conv.weight.shape();
        const std::size_t kk = ws.h * ws.w;
        for (std::size_t o : k.out[li]) {
            for (std::size_t i = 0; i < ws.c; ++i) std::fill_n(conv.weight.ptr() + conv.weight.offset(o, i, 0, 0), kk, 0.0f);
            if (conv.bias) (*conv.bias)[o] = 0.0f;
        }
        for (std::size_t i : k.in[li])
            for (std::size_t o = 0; o < ws.n; ++o) std::fill_n(conv.weight.ptr() + conv.weight.offset(o, i, 0, 0), kk, 0.0f);
    }
    return out;
}

Model compact(const Model& model, const std::vector<PruneMask>& masks) {
    std::vector<PruneSite> sites;
    const Keep k = dropped_per_layer(model, masks, sites);
    Model out;
    out.config = model.config;

    std::vector<std::size_t> widths;
    for (const auto& s : sites) widths.push_back(s.width);
    for (const auto& mask : merge_masks(masks, sites)) widths[mask.site_id] -= mask.drop.size();
    out.config.ch = widths[0];
    out.config.inner.assign(widths.begin() + 1, widths.end());
    if (std::all_of(out.config.inner.begin(), out.config.inner.end(), [&](std::size_t w) { return w == out.config.ch; }))
        out.config.inner.clear();

    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const auto& src = model.layers[li];
        const Shape ws = src.conv.weight.shape();
        const auto keep_out = complement(ws.n, k.out[li]);
        const auto keep_in = complement(ws.c, k.in[li]);
        const std::size_t kk = ws.h * ws.w;
        Layer dst;
        dst.name = src.name;
        dst.conv.stride = src.conv.stride;
        dst.conv.pad = src.conv.pad;
        dst.conv.floor_output = src.conv.floor_output;
        dst.conv.weight = TensorF(Shape{keep_out.size(), keep_in.size(), ws.h, ws.w});
        for (std::size_t o = 0; o < keep_out.size(); ++o)
            for (std::size_t i = 0; i < keep_in.size(); ++i)
                std::copy_n(src.conv.weight.ptr() + src.conv.weight.offset(keep_out[o], keep_in[i], 0, 0), kk,
                            dst.conv.weight.ptr() + dst.conv.weight.offset(o, i, 0, 0));
        if (src.conv.bias) {
            std::vector<float> b;
            for (std::size_t o : keep_out) b.push_back((*src.conv.bias)[o]);
            dst.conv.bias = std::move(b);
        }
        out.layers.push_back(std::move(dst));
    }
    return out;
}

Model strip_bias(const Model& model) {
    Model out = model;
    out.config.bias = false;
    for (auto& l : out.layers) l.conv.bias.reset();
    return out;
}

}  // namespace bpp
