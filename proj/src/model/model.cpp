// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/model/model.hpp"

#include <cmath>
#include <sstream>

#include "proxyv/errors.hpp"
#include "proxyv/numerics/mac_counter.hpp"

namespace proxyv {

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, SeededRng& rng, double stddev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.normal() * stddev);
    return t;
}

template <typename T>
Var<T> leaf(Tape<T>& tape, Parameter<T>& p, bool trainable) {
    return trainable ? tape.param(p) : tape.constant(p.value);
}

template <typename T>
Var<T> norm(Var<T> x, Var<T> gain, const ModelConfig& c) {
    return c.normalize ? ad::rms_norm(x, gain, static_cast<T>(c.norm_eps)) : x;
}

template <typename T>
Var<T> ffn(Var<T> x, const LayerVars<T>& w) {
    return ad::matmul(ad::silu_mul(ad::matmul(x, w.ffn_gate), ad::matmul(x, w.ffn_up)), w.ffn_down);
}

/// Per-example indices replicated over the batch with a row stride.
std::vector<int> batched(std::span<const int> idx, std::size_t stride, std::size_t batch) {
    return batched_rows(idx, stride, batch);
}

/// Places text rows and vision rows (two sources) back into layout order.
std::vector<RowRef> merge_groups(const SequencePlan& plan, std::size_t batch) {
    const std::size_t n = plan.layout.size();
    const std::size_t nt = plan.text_rows.size(), nv = plan.vision_rows.size();
    std::vector<RowRef> rows;
    rows.reserve(batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            const int rank = plan.group_rank[i];
            if (plan.layout.is_vision(i)) {
                rows.push_back({1, static_cast<int>(b * nv) + rank});
            } else {
                rows.push_back({0, static_cast<int>(b * nt) + rank});
            }
        }
    }
    return rows;
}

void require(bool ok, LayerMode mode, const char* what) {
    if (!ok) throw ConfigError(std::string("layer mode ") + std::string(mode_name(mode)) + " needs " + what);
}

template <typename T>
Var<T> baseline_layer(Var<T> x, const LayerContext& ctx, const LayerVars<T>& w) {
    const SequencePlan& plan = *ctx.plan;
    const AttentionPlan& ap = ctx.mask == MaskKind::VisionMasked ? plan.vision_masked : plan.causal;
    const Var<T> h = ad::add(x, mha(norm(x, w.attn_norm, *ctx.config), w.attn, ap, plan.layout.size(), ctx.batch));
    return ad::add(h, ffn(norm(h, w.ffn_norm, *ctx.config), w));
}

template <typename T>
Var<T> attn_skip_layer(Var<T> x, const LayerContext& ctx, const LayerVars<T>& w) {
    const SequencePlan& plan = *ctx.plan;
    const std::size_t n = plan.layout.size(), nt = plan.text_rows.size();
    const MhaParts<T> parts = attend(norm(x, w.attn_norm, *ctx.config), w.attn, plan.text_queries, n, ctx.batch);
    // Text rows take the attention context, vision rows their own values; one o-projection covers both.
    std::vector<RowRef> rows;
    rows.reserve(ctx.batch * n);
    for (std::size_t b = 0; b < ctx.batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            if (plan.layout.is_vision(i)) {
                rows.push_back({1, static_cast<int>(b * n + i)});
            } else {
                rows.push_back({0, static_cast<int>(b * nt) + plan.group_rank[i]});
            }
        }
    }
    const Var<T> sources[2] = {parts.context, parts.values};
    const Var<T> h = ad::add(x, ad::matmul(ad::stitch_rows<T>(sources, rows), w.attn.wo));
    return ad::add(h, ffn(norm(h, w.ffn_norm, *ctx.config), w));
}

template <typename T>
Var<T> light_mlp_layer(Var<T> x, const LayerContext& ctx, const LayerVars<T>& w) {
    require(w.light.has_value(), LayerMode::LightMlp, "light MLP parameters");
    const SequencePlan& plan = *ctx.plan;
    const std::size_t n = plan.layout.size();
    const Var<T> xn = norm(x, w.attn_norm, *ctx.config);
    const MhaParts<T> parts = attend(xn, w.attn, plan.text_queries, n, ctx.batch);
    const std::vector<int> text_rows = batched(plan.text_rows, n, ctx.batch);
    const Var<T> ht = ad::add(ad::gather_rows(x, text_rows), ad::matmul(parts.context, w.attn.wo));
    const Var<T> text_out = ad::add(ht, ffn(norm(ht, w.ffn_norm, *ctx.config), w));
    if (plan.vision_rows.empty()) return text_out;
    const std::vector<int> vision_rows = batched(plan.vision_rows, n, ctx.batch);
    const Var<T> vision_out =
        ad::add(ad::gather_rows(x, vision_rows), light_mlp(ad::gather_rows(xn, vision_rows), *w.light));
    const Var<T> sources[2] = {text_out, vision_out};
    return ad::stitch_rows<T>(sources, merge_groups(plan, ctx.batch));
}

}  // namespace

std::uint64_t light_mlp_parameter_count(std::uint64_t d, std::uint64_t h) { return d * h + h * h + h * d; }

template <typename T>
LightMlpParams<T> LightMlpParams<T>::init(std::size_t d, std::size_t h, SeededRng& rng, double stddev,
                                          bool zero_output, const std::string& prefix) {
    LightMlpParams p;
    p.in = Parameter<T>(prefix + "in", normal_tensor<T>({d, h}, rng, stddev));
    p.mid = Parameter<T>(prefix + "mid", normal_tensor<T>({h, h}, rng, stddev));
    p.out = Parameter<T>(prefix + "out", zero_output ? Tensor<T>(Shape{h, d}) : normal_tensor<T>({h, d}, rng, stddev));
    return p;
}

template <typename T>
LightMlpVars<T> bind(Tape<T>& tape, LightMlpParams<T>& p, bool trainable) {
    return {leaf(tape, p.in, trainable), leaf(tape, p.mid, trainable), leaf(tape, p.out, trainable)};
}

template <typename T>
Var<T> light_mlp(Var<T> x, const LightMlpVars<T>& w) {
    return ad::matmul(ad::silu(ad::matmul(ad::silu(ad::matmul(x, w.in)), w.mid)), w.out);
}

template <typename T>
LayerParams<T> LayerParams<T>::init(const ModelConfig& c, LayerMode mode, SeededRng& rng, const std::string& prefix) {
    LayerParams p;
    p.mode = mode;
    const std::size_t d = c.width;
    p.attn_norm = Parameter<T>(prefix + "attn_norm", Tensor<T>(Shape{d}, T{1}));
    p.ffn_norm = Parameter<T>(prefix + "ffn_norm", Tensor<T>(Shape{d}, T{1}));
    p.attn = AttentionParams<T>::init(d, c.heads, rng, c.init_std, prefix + "attn.");
    p.ffn_gate = Parameter<T>(prefix + "ffn.gate", normal_tensor<T>({d, c.ffn_width}, rng, c.init_std));
    p.ffn_up = Parameter<T>(prefix + "ffn.up", normal_tensor<T>({d, c.ffn_width}, rng, c.init_std));
    p.ffn_down = Parameter<T>(prefix + "ffn.down", normal_tensor<T>({c.ffn_width, d}, rng, c.init_std));
    if (mode == LayerMode::LightMlp) {
        p.light = LightMlpParams<T>::init(d, c.light_hidden, rng, c.init_std, c.zero_init_updates, prefix + "light.");
    }
    if (is_proxy_mode(mode)) {
        p.update =
            GuidedUpdateParams<T>::init(d, c.update_hidden, rng, c.init_std, c.zero_init_updates, prefix + "update.");
    }
    if (mode == LayerMode::ProxyVNonSpatial) {
        p.nonspatial =
            NonSpatialProxyParams<T>::init(c.proxies_per_grid(), d, c.query_dim, rng, c.init_std, prefix + "ns.");
    }
    return p;
}

template <typename T>
std::vector<Parameter<T>*> LayerParams<T>::parameters() {
    std::vector<Parameter<T>*> out{&attn_norm, &ffn_norm, &attn.wq,  &attn.wk,  &attn.wv,
                                   &attn.wo,   &ffn_gate, &ffn_up,   &ffn_down};
    if (light) out.insert(out.end(), {&light->in, &light->mid, &light->out});
    if (update) out.insert(out.end(), {&update->down_full, &update->down_proxy, &update->hidden, &update->out});
    if (nonspatial) out.insert(out.end(), {&nonspatial->queries, &nonspatial->key_proj});
    return out;
}

template <typename T>
LayerVars<T> bind(Tape<T>& tape, LayerParams<T>& p, bool trainable) {
    LayerVars<T> w;
    w.mode = p.mode;
    w.attn_norm = leaf(tape, p.attn_norm, trainable);
    w.ffn_norm = leaf(tape, p.ffn_norm, trainable);
    w.attn = {leaf(tape, p.attn.wq, trainable), leaf(tape, p.attn.wk, trainable), leaf(tape, p.attn.wv, trainable),
              leaf(tape, p.attn.wo, trainable), p.attn.heads};
    w.ffn_gate = leaf(tape, p.ffn_gate, trainable);
    w.ffn_up = leaf(tape, p.ffn_up, trainable);
    w.ffn_down = leaf(tape, p.ffn_down, trainable);
    if (p.light) w.light = bind(tape, *p.light, trainable);
    if (p.update) {
        w.update = GuidedUpdateVars<T>{leaf(tape, p.update->down_full, trainable),
                                       leaf(tape, p.update->down_proxy, trainable),
                                       leaf(tape, p.update->hidden, trainable), leaf(tape, p.update->out, trainable)};
    }
    if (p.nonspatial) {
        w.nonspatial = NonSpatialVars<T>{leaf(tape, p.nonspatial->queries, trainable),
                                         leaf(tape, p.nonspatial->key_proj, trainable), p.nonspatial->scale()};
    }
    return w;
}

template <typename T>
Var<T> proxyv_layer_forward(Var<T> x, const LayerContext& ctx, const LayerVars<T>& w, ProxyState<T>* state) {
    const SequencePlan& plan = *ctx.plan;
    const ModelConfig& c = *ctx.config;
    const bool spatial = w.mode != LayerMode::ProxyVNonSpatial;
    require(w.update.has_value(), w.mode, "guided-update parameters");
    require(spatial || w.nonspatial.has_value(), w.mode, "non-spatial proxy parameters");
    if (plan.vision_rows.empty()) return baseline_layer(x, ctx, w);
    if (plan.proxies_per_grid == 0) throw ConfigError("proxy layer: sequence plan has no proxy layout");

    const std::size_t n = plan.layout.size(), n_ext = plan.extended.size();
    const std::size_t blocks = ctx.batch * plan.grids;
    const std::size_t m_example = plan.grids * plan.proxies_per_grid;
    const std::vector<int> vision_rows = batched(plan.vision_rows, n, ctx.batch);
    const Var<T> full = ad::gather_rows(x, vision_rows);

    const bool carried = c.persist_proxies && state != nullptr && state->proxies.has_value();
    std::optional<Var<T>> logits;
    Var<T> proxies;
    if (spatial) {
        proxies = carried ? *state->proxies
                          : downsample_spatial(full, SpatialProxyConfig{plan.side, c.proxy_factor}, blocks);
    } else if (carried) {
        // Carried proxies replace the pooled ones; the logits are still needed for the splat.
        const Var<T> keys = ad::matmul(full, w.nonspatial->key_proj);
        logits = ad::scale(ad::block_matmul(w.nonspatial->queries, keys, blocks, {.trans_b = true, .shared_a = true}),
                           static_cast<T>(w.nonspatial->scale));
        proxies = *state->proxies;
    } else {
        const NonSpatialProxies<T> gen = nonspatial_generate(full, *w.nonspatial, blocks);
        proxies = gen.proxies;
        logits = gen.logits;
    }

    // Extended sequence: each grid's proxies follow its vision block.
    std::vector<RowRef> ext_rows;
    ext_rows.reserve(ctx.batch * n_ext);
    for (std::size_t b = 0; b < ctx.batch; ++b) {
        for (const RowRef& r : plan.extended_rows) {
            const std::size_t base = r.source == 0 ? b * n : b * m_example;
            ext_rows.push_back({r.source, static_cast<int>(base) + r.row});
        }
    }
    const Var<T> ext_sources[2] = {x, proxies};
    const Var<T> ext = ad::stitch_rows<T>(ext_sources, ext_rows);

    const MhaParts<T> parts = attend(norm(ext, w.attn_norm, c), w.attn, plan.proxy_queries, n_ext, ctx.batch);
    const std::vector<int> query_rows = batched(plan.proxy_queries.q_idx, n_ext, ctx.batch);
    const Var<T> hq = ad::add(ad::gather_rows(ext, query_rows), ad::matmul(parts.context, w.attn.wo));
    const Var<T> outq = ad::add(hq, ffn(norm(hq, w.ffn_norm, c), w));

    const std::size_t nq = plan.proxy_queries.q_idx.size();
    const Var<T> proxies_out = ad::gather_rows(outq, batched(plan.query_proxy_rank, nq, ctx.batch));
    const Var<T> text_out = ad::gather_rows(outq, batched(plan.query_text_rank, nq, ctx.batch));

    Var<T> vision_out;
    if (spatial) {
        const std::vector<int> corr = batched(plan.vision_to_proxy, m_example, ctx.batch);
        // batched() offsets by stride * b, matching the proxy rows of example b.
        vision_out = guided_update(full, proxies_out, corr, *w.update);
    } else {
        vision_out = guided_update_ns(full, nonspatial_splat(*logits, proxies_out, blocks), *w.update);
    }
    if (state != nullptr && c.persist_proxies) state->proxies = proxies_out;

    const Var<T> sources[2] = {text_out, vision_out};
    return ad::stitch_rows<T>(sources, merge_groups(plan, ctx.batch));
}

template <typename T>
Var<T> layer_forward(LayerMode mode, Var<T> x, const LayerContext& ctx, const LayerVars<T>& w, ProxyState<T>* state) {
    if (ctx.config == nullptr || ctx.plan == nullptr) throw StateError("layer_forward: context is incomplete");
    if (w.mode != mode) {
        throw ConfigError("layer_forward: parameters built for " + std::string(mode_name(w.mode)) + " used as " +
                          std::string(mode_name(mode)));
    }
    const std::size_t expected = ctx.batch * ctx.plan->layout.size();
    if (x.rows() != expected || x.cols() != ctx.config->width) {
        throw DimensionError("layer_forward: states " + shape_to_string(x.value().shape()) + ", expected " +
                             std::to_string(expected) + "x" + std::to_string(ctx.config->width));
    }
    switch (mode) {
        case LayerMode::Baseline: return baseline_layer(x, ctx, w);
        case LayerMode::AttnSkip:
            return ctx.plan->text_rows.empty() ? baseline_layer(x, ctx, w) : attn_skip_layer(x, ctx, w);
        case LayerMode::LightMlp:
            return ctx.plan->text_rows.empty() ? baseline_layer(x, ctx, w) : light_mlp_layer(x, ctx, w);
        case LayerMode::ProxyVSpatial:
        case LayerMode::ProxyVNonSpatial: return proxyv_layer_forward(x, ctx, w, state);
    }
    throw ConfigError("layer_forward: unknown mode");
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    SeededRng rng(seed);
    const std::size_t d = config_.width;
    token_embedding_ = Parameter<T>("embed.tokens", normal_tensor<T>({config_.input_vocab(), d}, rng, 1.0));
    if (config_.vision_position) {
        vision_position_ = Parameter<T>("embed.vision_position",
                                        normal_tensor<T>({config_.grid_side * config_.grid_side, d}, rng, 1.0));
    }
    for (std::size_t l = 0; l < config_.layers; ++l) {
        layers_.push_back(LayerParams<T>::init(config_, config_.schedule[l], rng, "layers." + std::to_string(l) + "."));
    }
    final_norm_ = Parameter<T>("head.norm", Tensor<T>(Shape{d}, T{1}));
    head_ = Parameter<T>("head.out", normal_tensor<T>({d, config_.vocab}, rng, config_.init_std));
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
    std::vector<Parameter<T>*> out{&token_embedding_};
    if (config_.vision_position) out.push_back(&vision_position_);
    for (auto& l : layers_) {
        auto p = l.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    out.push_back(&final_norm_);
    out.push_back(&head_);
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
    std::size_t total = 0;
    for (auto* p : parameters()) total += p->value.numel();
    return total;
}

template <typename T>
TokenLayout Model<T>::layout(std::size_t text_len) const {
    return TokenLayout::grids_then_text(config_.grids, config_.effective_side(), text_len);
}

template <typename T>
const SequencePlan& Model<T>::plan(std::size_t text_len) {
    auto it = plans_.find(text_len);
    if (it == plans_.end()) {
        it = plans_.emplace(text_len, std::make_unique<SequencePlan>(make_sequence_plan(layout(text_len), config_)))
                 .first;
    }
    return *it->second;
}

template <typename T>
Var<T> Model<T>::embed(Tape<T>& tape, const Batch& batch, bool trainable) {
    const std::size_t n0 = config_.grid_side * config_.grid_side;
    const std::size_t per_example = config_.grids * n0;
    if (batch.size == 0) throw InputError("forward: empty batch");
    if (batch.vision.size() != batch.size * per_example) {
        throw InputError("forward: " + std::to_string(batch.vision.size()) + " vision ids for " +
                         std::to_string(batch.size) + " examples of " + std::to_string(per_example));
    }
    if (batch.text.size() != batch.size * batch.text_len) throw InputError("forward: text ids do not match text_len");
    for (int id : batch.vision) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab) {
            throw InputError("forward: vision symbol " + std::to_string(id) + " outside [0, " +
                             std::to_string(config_.vocab) + ")");
        }
    }
    for (int id : batch.text) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.input_vocab()) {
            throw InputError("forward: text token " + std::to_string(id) + " outside the input vocabulary");
        }
    }
    const Var<T> table = leaf(tape, token_embedding_, trainable);
    const Var<T> sep = ad::gather_rows(table, std::vector<int>{static_cast<int>(config_.separator_id())});
    const Var<T> text = ad::gather_rows(table, batch.text);
    Var<T> vision = tape.constant(Tensor<T>(Shape{1, config_.width}));
    if (per_example > 0) {
        vision = ad::gather_rows(table, batch.vision);
        if (config_.vision_position) {
            std::vector<int> pos(batch.vision.size());
            for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i % n0);
            vision = ad::add(vision, ad::gather_rows(leaf(tape, vision_position_, trainable), pos));
        }
        const std::size_t s = config_.reduction_factor;
        if (config_.reduction == VisionReduction::UniformPrune && s > 1) {
            std::vector<int> keep;
            const std::size_t side = config_.grid_side;
            for (std::size_t blk = 0; blk < batch.size * config_.grids; ++blk)
                for (std::size_t r = 0; r < side; r += s)
                    for (std::size_t col = 0; col < side; col += s)
                        keep.push_back(static_cast<int>(blk * n0 + r * side + col));
            vision = ad::gather_rows(vision, keep);
        } else if (config_.reduction == VisionReduction::PoolMerge && s > 1) {
            vision = downsample_spatial(vision, SpatialProxyConfig{config_.grid_side, s}, batch.size * config_.grids);
        }
    }
    const SequencePlan& p = plan(batch.text_len);
    return assemble_sequence(vision, sep, text, p.layout, batch.size);
}

template <typename T>
Var<T> Model<T>::forward(Tape<T>& tape, const Batch& batch, const ForwardOptions& options, bool trainable) {
    if (!options.masks.empty() && options.masks.size() != config_.layers) {
        throw ConfigError("forward: mask schedule has " + std::to_string(options.masks.size()) + " entries for " +
                          std::to_string(config_.layers) + " layers");
    }
    Var<T> x = embed(tape, batch, trainable);
    const SequencePlan& p = plan(batch.text_len);
    LayerContext ctx{&config_, &p, batch.size, MaskKind::Causal};
    ProxyState<T> state;
    if (options.layer_macs) options.layer_macs->clear();
    for (std::size_t l = 0; l < config_.layers; ++l) {
        ctx.mask = options.masks.empty() ? MaskKind::Causal : options.masks[l];
        if (ctx.mask == MaskKind::VisionMasked && config_.schedule[l] != LayerMode::Baseline) {
            throw ConfigError("forward: vision masking applies to baseline layers only");
        }
        const LayerVars<T> w = bind(tape, layers_[l], trainable);
        MacScope scope;
        x = proxyv::layer_forward(config_.schedule[l], x, ctx, w, &state);
        if (options.layer_macs) options.layer_macs->push_back(scope.total());
    }
    const std::size_t n = p.layout.size();
    std::vector<int> answer_rows(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) answer_rows[b] = static_cast<int>(b * n + n - 1);
    const Var<T> last = ad::gather_rows(x, answer_rows);
    const Var<T> normed = ad::rms_norm(last, leaf(tape, final_norm_, trainable), static_cast<T>(config_.norm_eps));
    return ad::matmul(normed, leaf(tape, head_, trainable));
}

template <typename T>
Tensor<T> Model<T>::forward_prefill(const Batch& batch, const ForwardOptions& options) {
    Tape<T> tape;
    return forward(tape, batch, options, false).value();
}

template <typename T>
Tensor<T> Model<T>::layer_forward(std::size_t i, const Tensor<T>& states, std::size_t text_len, MaskKind mask) {
    Tape<T> tape;
    const SequencePlan& p = plan(text_len);
    LayerContext ctx{&config_, &p, 1, mask};
    const LayerVars<T> w = bind(tape, layers_.at(i), false);
    ProxyState<T> state;
    return proxyv::layer_forward(config_.schedule[i], tape.constant(states), ctx, w, &state).value();
}

template <typename T>
T Model<T>::train_step(const Batch& batch, Adam<T>& optimizer) {
    Tape<T> tape;
    const Var<T> logits = forward(tape, batch, {}, true);
    const Var<T> loss = ad::cross_entropy(logits, batch.answers);
    const T value = loss.value()[0];
    if (!std::isfinite(static_cast<double>(value))) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss " << value << " at optimizer step " << optimizer.steps_taken()
            << " (batch " << batch.size << ", logits finite: " << (logits.value().all_finite() ? "yes" : "no") << ")";
        throw TrainingError(msg.str());
    }
    tape.backward(loss);
    const auto params = parameters();
    optimizer.step(params);
    return value;
}

#define PROXYV_INSTANTIATE_MODEL(T)                                                                             \
    template struct LightMlpParams<T>;                                                                          \
    template struct LayerParams<T>;                                                                             \
    template LightMlpVars<T> bind(Tape<T>&, LightMlpParams<T>&, bool);                                          \
    template LayerVars<T> bind(Tape<T>&, LayerParams<T>&, bool);                                                \
    template Var<T> light_mlp(Var<T>, const LightMlpVars<T>&);                                                  \
    template Var<T> layer_forward(LayerMode, Var<T>, const LayerContext&, const LayerVars<T>&, ProxyState<T>*); \
    template Var<T> proxyv_layer_forward(Var<T>, const LayerContext&, const LayerVars<T>&, ProxyState<T>*);     \
    template class Model<T>;

PROXYV_INSTANTIATE_MODEL(float)
PROXYV_INSTANTIATE_MODEL(double)

}  // namespace proxyv
