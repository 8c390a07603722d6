// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "proxyv/attention/mask.hpp"
#include "proxyv/attention/mha.hpp"
#include "proxyv/model/config.hpp"
#include "proxyv/model/sequence.hpp"
#include "proxyv/numerics/autodiff.hpp"
#include "proxyv/numerics/optimizer.hpp"
#include "proxyv/proxy/proxy.hpp"

namespace proxyv {

/// d -> h' -> h' -> d with silu between layers.
template <typename T>
struct LightMlpParams {
    Parameter<T> in;
    Parameter<T> mid;
    Parameter<T> out;

    static LightMlpParams init(std::size_t d, std::size_t h, SeededRng& rng, double stddev, bool zero_output,
                               const std::string& prefix);
};

/// d*h + h*h + h*d
std::uint64_t light_mlp_parameter_count(std::uint64_t d, std::uint64_t h);

template <typename T>
struct LightMlpVars {
    Var<T> in, mid, out;
};

template <typename T>
LightMlpVars<T> bind(Tape<T>& tape, LightMlpParams<T>& p, bool trainable = true);

template <typename T>
Var<T> light_mlp(Var<T> x, const LightMlpVars<T>& w);

template <typename T>
struct LayerParams {
    LayerMode mode = LayerMode::Baseline;
    Parameter<T> attn_norm;
    Parameter<T> ffn_norm;
    AttentionParams<T> attn;
    Parameter<T> ffn_gate;
    Parameter<T> ffn_up;
    Parameter<T> ffn_down;
    std::optional<LightMlpParams<T>> light;
    std::optional<GuidedUpdateParams<T>> update;
    std::optional<NonSpatialProxyParams<T>> nonspatial;

    static LayerParams init(const ModelConfig& config, LayerMode mode, SeededRng& rng, const std::string& prefix);
    std::vector<Parameter<T>*> parameters();
};

template <typename T>
struct LayerVars {
    LayerMode mode = LayerMode::Baseline;
    Var<T> attn_norm, ffn_norm;
    AttentionVars<T> attn;
    Var<T> ffn_gate, ffn_up, ffn_down;
    std::optional<LightMlpVars<T>> light;
    std::optional<GuidedUpdateVars<T>> update;
    std::optional<NonSpatialVars<T>> nonspatial;
};

/// Binds parameters as trainable leaves, or as constants when `trainable` is false.
template <typename T>
LayerVars<T> bind(Tape<T>& tape, LayerParams<T>& p, bool trainable = true);

/// Proxy rows carried between proxy layers when persistence is enabled.
template <typename T>
struct ProxyState {
    std::optional<Var<T>> proxies;
};

struct LayerContext {
    const ModelConfig* config = nullptr;
    const SequencePlan* plan = nullptr;
    std::size_t batch = 1;
    /// Mask used by Baseline layers.
    MaskKind mask = MaskKind::Causal;
};

/// One decoder layer over batch*n rows. Throws ConfigError when the bound
/// parameters do not provide what `mode` needs.
template <typename T>
Var<T> layer_forward(LayerMode mode, Var<T> x, const LayerContext& ctx, const LayerVars<T>& w,
                     ProxyState<T>* state = nullptr);

template <typename T>
Var<T> proxyv_layer_forward(Var<T> x, const LayerContext& ctx, const LayerVars<T>& w, ProxyState<T>* state = nullptr);

/// Inputs for a batch of examples sharing one text length.
struct Batch {
    std::size_t size = 0;
    std::size_t text_len = 0;
    /// size * grids * grid_side^2 symbol ids, raster order per grid.
    std::vector<int> vision;
    /// size * text_len input token ids.
    std::vector<int> text;
    /// size targets in [0, vocab).
    std::vector<int> answers;
};

struct ForwardOptions {
    /// Per-layer mask override; empty means causal everywhere.
    std::vector<MaskKind> masks;
    /// When set, receives the multiply-accumulate count of every layer.
    std::vector<std::uint64_t>* layer_macs = nullptr;
};

template <typename T>
class Model {
  public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter<T>*> parameters();
    std::size_t parameter_count();
    LayerParams<T>& layer(std::size_t i) { return layers_.at(i); }

    /// Layout of one example for the given text length.
    TokenLayout layout(std::size_t text_len) const;
    const SequencePlan& plan(std::size_t text_len);

    /// Records embedding, layers and head; returns batch x vocab logits.
    Var<T> forward(Tape<T>& tape, const Batch& batch, const ForwardOptions& options = {}, bool trainable = true);
    /// Logits at the answer positions.
    Tensor<T> forward_prefill(const Batch& batch, const ForwardOptions& options = {});

    /// Applies layer `i` to one example's hidden states (n x d).
    Tensor<T> layer_forward(std::size_t i, const Tensor<T>& states, std::size_t text_len,
                            MaskKind mask = MaskKind::Causal);

    /// Cross-entropy step; throws TrainingError on a non-finite loss.
    T train_step(const Batch& batch, Adam<T>& optimizer);

  private:
    Var<T> embed(Tape<T>& tape, const Batch& batch, bool trainable);

    ModelConfig config_;
    Parameter<T> token_embedding_;
    Parameter<T> vision_position_;
    std::vector<LayerParams<T>> layers_;
    Parameter<T> final_norm_;
    Parameter<T> head_;
    std::map<std::size_t, std::unique_ptr<SequencePlan>> plans_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace proxyv
