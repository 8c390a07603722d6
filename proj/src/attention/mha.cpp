// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/attention/mha.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "proxyv/numerics/kernels.hpp"

namespace proxyv {

template <typename T>
void AttentionParams<T>::validate() const {
    const std::size_t d = dim();
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention: head count " + std::to_string(heads) + " does not divide width " +
                          std::to_string(d));
    }
    for (const auto* p : {&wq, &wk, &wv, &wo}) {
        if (p->value.rank() != 2 || p->value.rows() != d || p->value.cols() != d) {
            throw ConfigError("attention: weight " + p->name + " must be " + std::to_string(d) + "x" +
                              std::to_string(d));
        }
    }
}

namespace {
template <typename T>
Tensor<T> normal_tensor(Shape shape, SeededRng& rng, double stddev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.normal() * stddev);
    return t;
}
}  // namespace

template <typename T>
AttentionParams<T> AttentionParams<T>::init(std::size_t d, std::size_t heads, SeededRng& rng, double stddev,
                                            const std::string& prefix) {
    AttentionParams p;
    p.heads = heads;
    p.wq = Parameter<T>(prefix + "wq", normal_tensor<T>({d, d}, rng, stddev));
    p.wk = Parameter<T>(prefix + "wk", normal_tensor<T>({d, d}, rng, stddev));
    p.wv = Parameter<T>(prefix + "wv", normal_tensor<T>({d, d}, rng, stddev));
    p.wo = Parameter<T>(prefix + "wo", normal_tensor<T>({d, d}, rng, stddev));
    p.validate();
    return p;
}

template <typename T>
AttentionVars<T> bind(Tape<T>& tape, AttentionParams<T>& p) {
    return {tape.param(p.wq), tape.param(p.wk), tape.param(p.wv), tape.param(p.wo), p.heads};
}

AttentionPlan make_plan(const TokenLayout& layout, std::vector<int> q_idx, std::vector<int> kv_idx,
                        const AttentionMask& full_mask, bool rotary) {
    if (q_idx.empty()) throw InputError("attention: empty query set");
    if (kv_idx.empty()) throw InputError("attention: empty key set");
    AttentionPlan plan;
    plan.mask = full_mask.restrict(q_idx, kv_idx);
    if (!plan.mask.rows_nonempty()) throw InputError("attention: a query row has no permitted key");
    if (rotary) {
        for (int i : q_idx) plan.q_pos.push_back(layout[static_cast<std::size_t>(i)].position);
        for (int i : kv_idx) plan.kv_pos.push_back(layout[static_cast<std::size_t>(i)].position);
    }
    plan.q_idx = std::move(q_idx);
    plan.kv_idx = std::move(kv_idx);
    return plan;
}

std::vector<int> batched_rows(std::span<const int> idx, std::size_t stride, std::size_t batch) {
    std::vector<int> out;
    out.reserve(idx.size() * batch);
    for (std::size_t b = 0; b < batch; ++b)
        for (int i : idx) out.push_back(static_cast<int>(b * stride) + i);
    return out;
}

namespace {

template <typename T>
void apply_rotation(Tensor<T>& x, std::span<const int> positions, std::size_t heads, std::size_t batch,
                    bool inverse) {
    const std::size_t d = x.cols();
    const std::size_t hd = d / heads;
    const std::size_t n = positions.size();
    const std::size_t half = hd / 2;
    std::vector<T> cos_t(n * half), sin_t(n * half);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < half; ++i) {
            const double theta = static_cast<double>(positions[r]) *
                                 std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
            cos_t[r * half + i] = static_cast<T>(std::cos(theta));
            sin_t[r * half + i] = static_cast<T>(inverse ? -std::sin(theta) : std::sin(theta));
        }
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < n; ++r) {
            T* row = x.data() + (b * n + r) * d;
            for (std::size_t i = 0; i < half; ++i) {
                const T c = cos_t[r * half + i];
                const T s = sin_t[r * half + i];
                for (std::size_t h = 0; h < heads; ++h) {
                    T* p = row + h * hd + 2 * i;
                    const T a = p[0], bb = p[1];
                    p[0] = a * c - bb * s;
                    p[1] = a * s + bb * c;
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Var<T> rope(Var<T> x, std::span<const int> positions, std::size_t heads, std::size_t batch) {
    const Tensor<T>& xv = x.value();
    if (heads == 0 || xv.cols() % heads != 0 || (xv.cols() / heads) % 2 != 0) {
        throw DimensionError("rope: head dimension must be even");
    }
    if (xv.rows() != positions.size() * batch) {
        throw DimensionError("rope: " + std::to_string(positions.size()) + " positions x " + std::to_string(batch) +
                             " examples for " + std::to_string(xv.rows()) + " rows");
    }
    Tensor<T> out = xv;
    apply_rotation(out, positions, heads, batch, false);
    std::vector<int> pos(positions.begin(), positions.end());
    const int ix = x.id;
    return x.tape->record(std::move(out), {x}, [ix, pos, heads, batch](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> d = g;
        apply_rotation(d, pos, heads, batch, true);
        t.accumulate(ix, std::move(d));
    });
}

namespace {

// Copies head h of example b (rows [b*n, (b+1)*n)) into a contiguous n x hd block.
template <typename T>
void load_head(const Tensor<T>& src, std::size_t b, std::size_t n, std::size_t h, std::size_t hd, T* dst) {
    const std::size_t d = src.cols();
    for (std::size_t r = 0; r < n; ++r) {
        const T* s = src.data() + (b * n + r) * d + h * hd;
        std::copy_n(s, hd, dst + r * hd);
    }
}

template <typename T>
void store_head_add(Tensor<T>& dst, std::size_t b, std::size_t n, std::size_t h, std::size_t hd, const T* src) {
    const std::size_t d = dst.cols();
    for (std::size_t r = 0; r < n; ++r) {
        T* o = dst.data() + (b * n + r) * d + h * hd;
        for (std::size_t j = 0; j < hd; ++j) o[j] += src[r * hd + j];
    }
}

template <typename T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, T* dst) {
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

}  // namespace

template <typename T>
Var<T> attention_core(Var<T> q, Var<T> k, Var<T> v, const AttentionMask& mask, std::size_t heads,
                      std::size_t batch) {
    const Tensor<T>& qv = q.value();
    const Tensor<T>& kv = k.value();
    const Tensor<T>& vv = v.value();
    const std::size_t d = qv.cols();
    if (batch == 0 || heads == 0 || d % heads != 0) throw DimensionError("attention_core: bad head/batch count");
    if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows()) {
        throw DimensionError("attention_core: q " + shape_to_string(qv.shape()) + ", k " + shape_to_string(kv.shape()) +
                             ", v " + shape_to_string(vv.shape()) + " are inconsistent");
    }
    const std::size_t nq = mask.queries(), nk = mask.keys();
    if (qv.rows() != nq * batch || kv.rows() != nk * batch) {
        throw DimensionError("attention_core: mask " + std::to_string(nq) + "x" + std::to_string(nk) +
                             " does not match q/k rows");
    }
    const std::size_t hd = d / heads;
    const T scl = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    // Attention probabilities per (example, head), kept for backward.
    auto probs = std::make_shared<std::vector<T>>(batch * heads * nq * nk);
    Tensor<T> out(Shape{batch * nq, d});
    std::vector<T> qh(nq * hd), kh(nk * hd), kt(hd * nk), vh(nk * hd), oh(nq * hd);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            T* p = probs->data() + (b * heads + h) * nq * nk;
            load_head(qv, b, nq, h, hd, qh.data());
            load_head(kv, b, nk, h, hd, kh.data());
            load_head(vv, b, nk, h, hd, vh.data());
            transpose_into(kh.data(), nk, hd, kt.data());
            gemm(qh.data(), kt.data(), p, nq, hd, nk, false);
            for (std::size_t i = 0; i < nq; ++i) {
                T* row = p + i * nk;
                T mx = neg_inf;
                for (std::size_t j = 0; j < nk; ++j) {
                    row[j] = mask.allowed(i, j) ? row[j] * scl : neg_inf;
                    mx = std::max(mx, row[j]);
                }
                T sum{0};
                for (std::size_t j = 0; j < nk; ++j) {
                    const T e = mask.allowed(i, j) ? std::exp(row[j] - mx) : T{0};
                    row[j] = e;
                    sum += e;
                }
                const T inv = T{1} / sum;
                for (std::size_t j = 0; j < nk; ++j) row[j] *= inv;
            }
            gemm(p, vh.data(), oh.data(), nq, nk, hd, false);
            store_head_add(out, b, nq, h, hd, oh.data());
        }
    }
    const int iq = q.id, ik = k.id, iv = v.id;
    return q.tape->record(std::move(out), {q, k, v}, [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& Q = t.value(iq);
        const Tensor<T>& K = t.value(ik);
        const Tensor<T>& V = t.value(iv);
        Tensor<T> dq(Q.shape()), dk(K.shape()), dv(V.shape());
        std::vector<T> qh(nq * hd), kh(nk * hd), vh(nk * hd), vt(hd * nk), gh(nq * hd), pt(nk * nq),
            dp(nq * nk), tmp_q(nq * hd), tmp_k(nk * hd), dst(nk * nq);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const T* p = probs->data() + (b * heads + h) * nq * nk;
                load_head(Q, b, nq, h, hd, qh.data());
                load_head(K, b, nk, h, hd, kh.data());
                load_head(V, b, nk, h, hd, vh.data());
                load_head(g, b, nq, h, hd, gh.data());
                // dV = P^T G
                transpose_into(p, nq, nk, pt.data());
                gemm(pt.data(), gh.data(), tmp_k.data(), nk, nq, hd, false);
                store_head_add(dv, b, nk, h, hd, tmp_k.data());
                // dP = G V^T ; dS = P * (dP - rowsum(dP * P)) * scale
                transpose_into(vh.data(), nk, hd, vt.data());
                gemm(gh.data(), vt.data(), dp.data(), nq, hd, nk, false);
                for (std::size_t i = 0; i < nq; ++i) {
                    T dot{0};
                    for (std::size_t j = 0; j < nk; ++j) dot += dp[i * nk + j] * p[i * nk + j];
                    for (std::size_t j = 0; j < nk; ++j) dp[i * nk + j] = p[i * nk + j] * (dp[i * nk + j] - dot) * scl;
                }
                // dQ = dS K ; dK = dS^T Q
                gemm(dp.data(), kh.data(), tmp_q.data(), nq, nk, hd, false);
                store_head_add(dq, b, nq, h, hd, tmp_q.data());
                transpose_into(dp.data(), nq, nk, dst.data());
                gemm(dst.data(), qh.data(), tmp_k.data(), nk, nq, hd, false);
                store_head_add(dk, b, nk, h, hd, tmp_k.data());
            }
        }
        t.accumulate(iq, std::move(dq));
        t.accumulate(ik, std::move(dk));
        t.accumulate(iv, std::move(dv));
    });
}

template <typename T>
MhaParts<T> attend(Var<T> x, const AttentionVars<T>& w, const AttentionPlan& plan, std::size_t rows_per_example,
                   std::size_t batch) {
    if (plan.q_idx.empty()) throw InputError("mha: empty query set");
    if (x.rows() != rows_per_example * batch) {
        throw DimensionError("mha: input has " + std::to_string(x.rows()) + " rows, expected " +
                             std::to_string(rows_per_example * batch));
    }
    const auto is_identity = [rows_per_example](const std::vector<int>& idx) {
        if (idx.size() != rows_per_example) return false;
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i] != static_cast<int>(i)) return false;
        return true;
    };
    const Var<T> xq = is_identity(plan.q_idx) ? x : ad::gather_rows(x, batched_rows(plan.q_idx, rows_per_example, batch));
    const Var<T> xkv =
        is_identity(plan.kv_idx) ? x : ad::gather_rows(x, batched_rows(plan.kv_idx, rows_per_example, batch));
    Var<T> q = ad::matmul(xq, w.wq);
    Var<T> k = ad::matmul(xkv, w.wk);
    const Var<T> v = ad::matmul(xkv, w.wv);
    if (!plan.q_pos.empty()) {
        q = rope(q, plan.q_pos, w.heads, batch);
        k = rope(k, plan.kv_pos, w.heads, batch);
    }
    return {attention_core(q, k, v, plan.mask, w.heads, batch), v};
}

template <typename T>
Var<T> mha(Var<T> x, const AttentionVars<T>& w, const AttentionPlan& plan, std::size_t rows_per_example,
           std::size_t batch) {
    return ad::matmul(attend(x, w, plan, rows_per_example, batch).context, w.wo);
}

template <typename T>
Tensor<T> mha(const Tensor<T>& x, const AttentionParams<T>& params, std::span<const int> q_idx,
              std::span<const int> kv_idx, const AttentionMask& mask, std::span<const int> positions) {
    if (q_idx.empty()) throw InputError("mha: empty query set");
    if (mask.queries() != q_idx.size() || mask.keys() != kv_idx.size()) {
        throw DimensionError("mha: mask shape does not match the query/key sets");
    }
    if (!mask.rows_nonempty()) throw InputError("mha: a query row has no permitted key");
    Tape<T> tape;
    AttentionParams<T> p = params;
    const AttentionVars<T> w = bind(tape, p);
    AttentionPlan plan;
    plan.q_idx.assign(q_idx.begin(), q_idx.end());
    plan.kv_idx.assign(kv_idx.begin(), kv_idx.end());
    plan.mask = mask;
    if (!positions.empty()) {
        for (int i : q_idx) plan.q_pos.push_back(positions[static_cast<std::size_t>(i)]);
        for (int i : kv_idx) plan.kv_pos.push_back(positions[static_cast<std::size_t>(i)]);
    }
    const Var<T> xv = tape.constant(x);
    return mha(xv, w, plan, x.rows(), 1).value();
}

template <typename T>
Tensor<T> vision_skip_update(const Tensor<T>& x_vision, const AttentionParams<T>& params, const Tensor<T>* norm_gain,
                             T eps) {
    const Tensor<T> xn = norm_gain != nullptr ? rms_norm(x_vision, *norm_gain, eps) : x_vision;
    return matmul(matmul(xn, params.wv.value), params.wo.value);
}

#define PROXYV_INSTANTIATE_MHA(T)                                                                                \
    template struct AttentionParams<T>;                                                                          \
    template AttentionVars<T> bind(Tape<T>&, AttentionParams<T>&);                                               \
    template Var<T> rope(Var<T>, std::span<const int>, std::size_t, std::size_t);                                \
    template Var<T> attention_core(Var<T>, Var<T>, Var<T>, const AttentionMask&, std::size_t, std::size_t);      \
    template MhaParts<T> attend(Var<T>, const AttentionVars<T>&, const AttentionPlan&, std::size_t, std::size_t); \
    template Var<T> mha(Var<T>, const AttentionVars<T>&, const AttentionPlan&, std::size_t, std::size_t);        \
    template Tensor<T> mha(const Tensor<T>&, const AttentionParams<T>&, std::span<const int>,                    \
                           std::span<const int>, const AttentionMask&, std::span<const int>);                    \
    template Tensor<T> vision_skip_update(const Tensor<T>&, const AttentionParams<T>&, const Tensor<T>*, T);

PROXYV_INSTANTIATE_MHA(float)
PROXYV_INSTANTIATE_MHA(double)

}  // namespace proxyv
