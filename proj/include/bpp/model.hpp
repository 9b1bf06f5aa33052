#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpp/ops.hpp"
#include "bpp/sites.hpp"
#include "bpp/tensor.hpp"

namespace bpp {

enum class Downscale { strided_conv, space_to_depth, haar_dwt };

std::string to_string(Downscale d);
Downscale parse_downscale(const std::string& s);
std::string to_string(ActKind a);
ActKind parse_act(const std::string& s);

// Network hyperparameters. Scale factors are fixed for the x3 track.
struct ModelConfig {
    std::size_t ch = 32;
    std::size_t m = 2;
    std::size_t R = 1;
    Downscale ds = Downscale::strided_conv;
    Activation act{ActKind::leaky_relu, 0.1};
    bool bias = false;
    // Widths of the interior positions (R*(m-1) entries, block-major) after
    // interior pruning. Empty means every interior width equals ch.
    std::vector<std::size_t> inner;

    static constexpr std::size_t net_scale = 3;
    static constexpr std::size_t down_factor = 2;
    static constexpr std::size_t up_factor = net_scale * down_factor;

    std::size_t inner_width(std::size_t block, std::size_t pos) const;
    void validate() const;
    bool operator==(const ModelConfig&) const;
};

nlohmann::json config_to_json(const ModelConfig& c);
// Rejects unknown keys.
ModelConfig config_from_json(const nlohmann::json& j);

struct LayerSpec {
    std::string name;
    std::size_t cin, cout, k, stride, pad;
};

// Ordered inventory: ds, block{r}.conv{i}..., tail.
std::vector<LayerSpec> layer_specs(const ModelConfig& c);
std::size_t parameter_count(const ModelConfig& c);
std::string block_conv_name(std::size_t block, std::size_t pos);

struct Layer {
    std::string name;
    ConvParams<float> conv;
};

struct Model {
    ModelConfig config;
    std::vector<Layer> layers;

    std::size_t index_of(const std::string& name) const;
    Layer& layer(const std::string& name) { return layers[index_of(name)]; }
    const Layer& layer(const std::string& name) const { return layers[index_of(name)]; }
    std::size_t block_index(std::size_t block, std::size_t pos) const { return 1 + block * config.m + pos; }
    std::size_t tail_index() const { return layers.size() - 1; }
    std::size_t parameter_count() const;
};

// Uniform fan-in scaled weights and biases; deterministic for a given seed.
Model build(const ModelConfig& config, std::uint64_t seed);

Model zeros_like(const ModelConfig& config);

enum class Mode { train, eval };

// (N, 3, H, W) -> (N, 3, 3H, 3W). Eval mode clamps the result to [0, 1].
TensorF forward(const Model& model, const TensorF& x, Mode mode = Mode::eval);

// Intermediates kept by a training forward pass.
struct ForwardTrace {
    std::vector<TensorF> conv_in;  // per layer
    std::vector<TensorF> conv_out;  // per layer, before activation
    std::vector<TensorF> block_sum;  // per block, skip + branch, before activation
    TensorF output;  // unclamped
};

ForwardTrace forward_train(const Model& model, const TensorF& x);

struct LayerGrad {
    TensorF weight;
    std::optional<std::vector<float>> bias;
};

// Parameter gradients of <grad_out, output>, one entry per layer.
std::vector<LayerGrad> backward(const Model& model, const ForwardTrace& trace, const TensorF& grad_out);

// Zero every slice tied to a dropped channel. Shapes unchanged.
Model apply_mask(const Model& model, const std::vector<PruneMask>& masks);

// Physically remove the dropped channels.
Model compact(const Model& model, const std::vector<PruneMask>& masks);

// Drop all bias vectors and clear the bias flag.
Model strip_bias(const Model& model);

}  // namespace bpp
