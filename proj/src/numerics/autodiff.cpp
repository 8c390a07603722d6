// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "proxyv/numerics/kernels.hpp"
#include "proxyv/numerics/mac_counter.hpp"

namespace proxyv {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
    if (finished_) throw StateError("tape: cannot record after backward");
    Node n;
    n.value = std::move(value);
    for (const auto& in : inputs) {
        if (in.tape != this) throw StateError("tape: input recorded on a different tape");
        n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.has_grad) {
        n.grad = Tensor<T>(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

template <typename T>
void Tape<T>::accumulate(int id, const Tensor<T>& g) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.requires_grad) return;
    require_same_shape(n.value, g, "tape gradient");
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
        return;
    }
    for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

template <typename T>
void Tape<T>::accumulate(int id, Tensor<T>&& g) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.requires_grad) return;
    require_same_shape(n.value, g, "tape gradient");
    if (!n.has_grad) {
        n.grad = std::move(g);
        n.has_grad = true;
        return;
    }
    for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

template <typename T>
void Tape<T>::backward(Var<T> out) {
    if (out.tape == this && out.id >= 0 && static_cast<std::size_t>(out.id) < nodes_.size() &&
        nodes_[static_cast<std::size_t>(out.id)].value.numel() != 1) {
        throw DimensionError("tape: backward without a seed requires a scalar output, got " +
                             shape_to_string(nodes_[static_cast<std::size_t>(out.id)].value.shape()));
    }
    backward(out, Tensor<T>(Shape{1}, T{1}));
}

template <typename T>
void Tape<T>::backward(Var<T> out, const Tensor<T>& seed) {
    if (nodes_.empty() || out.tape != this || out.id < 0 || static_cast<std::size_t>(out.id) >= nodes_.size()) {
        throw StateError("tape: backward requested before a forward pass was recorded");
    }
    if (finished_) throw StateError("tape: backward already ran on this tape");
    finished_ = true;
    Node& root = nodes_[static_cast<std::size_t>(out.id)];
    if (seed.numel() != root.value.numel()) {
        throw DimensionError("tape: seed " + shape_to_string(seed.shape()) + " does not match output " +
                             shape_to_string(root.value.shape()));
    }
    if (!root.requires_grad) return;
    root.grad = seed.reshaped(root.value.shape());
    root.has_grad = true;

    MacSuspend no_count;
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.param != nullptr) {
            auto& pg = n.param->grad;
            for (std::size_t k = 0; k < pg.numel(); ++k) pg[k] += n.grad[k];
        }
    }
}

template <typename T>
const Tensor<T>* Tape<T>::grad(Var<T> v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) return nullptr;
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.has_grad ? &n.grad : nullptr;
}

template class Tape<float>;
template class Tape<double>;

namespace ad {

namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* what) {
    if (!a.valid() || a.tape != b.tape) throw StateError(std::string(what) + ": operands on different tapes");
}

template <typename T>
void require_matrix_shape(Var<T> a, const char* what) {
    require_matrix(a.value(), what);
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "matmul");
    Tensor<T> out = proxyv::matmul(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, proxyv::matmul_nt(g, t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, proxyv::matmul_tn(t.value(ia), g));
    });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "matmul_nt");
    Tensor<T> out = proxyv::matmul_nt(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, proxyv::matmul(g, t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, proxyv::matmul_tn(g, t.value(ia)));
    });
}

namespace {

// Geometry of one operand of block_matmul: each block is `rows x cols` as stored.
struct BlockGeom {
    std::size_t rows;
    std::size_t cols;
    bool shared;
};

template <typename T>
BlockGeom block_geom(const Tensor<T>& x, std::size_t blocks, bool shared, const char* name) {
    require_matrix(x, "block_matmul");
    if (shared) return {x.rows(), x.cols(), true};
    if (x.rows() % blocks != 0) {
        throw DimensionError(std::string("block_matmul: operand ") + name + " " + shape_to_string(x.shape()) +
                             " not divisible into " + std::to_string(blocks) + " blocks");
    }
    return {x.rows() / blocks, x.cols(), false};
}

template <typename T>
Tensor<T> extract_block(const Tensor<T>& x, const BlockGeom& g, std::size_t i) {
    const std::size_t offset = g.shared ? 0 : i * g.rows * g.cols;
    std::vector<T> data(x.data() + offset, x.data() + offset + g.rows * g.cols);
    return Tensor<T>(Shape{g.rows, g.cols}, std::move(data));
}

template <typename T>
void add_block(Tensor<T>& dst, const BlockGeom& g, std::size_t i, const Tensor<T>& src) {
    const std::size_t offset = g.shared ? 0 : i * g.rows * g.cols;
    for (std::size_t k = 0; k < src.numel(); ++k) dst[offset + k] += src[k];
}

}  // namespace

template <typename T>
Var<T> block_matmul(Var<T> a, Var<T> b, std::size_t blocks, BlockMatmulOptions opts) {
    require_same_tape(a, b, "block_matmul");
    if (blocks == 0) throw InputError("block_matmul: blocks must be positive");
    const BlockGeom ga = block_geom(a.value(), blocks, opts.shared_a, "a");
    const BlockGeom gb = block_geom(b.value(), blocks, opts.shared_b, "b");
    const std::size_t m = opts.trans_a ? ga.cols : ga.rows;
    const std::size_t ka = opts.trans_a ? ga.rows : ga.cols;
    const std::size_t kb = opts.trans_b ? gb.cols : gb.rows;
    const std::size_t n = opts.trans_b ? gb.rows : gb.cols;
    if (ka != kb) {
        throw DimensionError("block_matmul: inner extents differ for " + shape_to_string(a.value().shape()) +
                             " and " + shape_to_string(b.value().shape()));
    }
    Tensor<T> out(Shape{blocks * m, n});
    for (std::size_t i = 0; i < blocks; ++i) {
        Tensor<T> ab = extract_block(a.value(), ga, i);
        Tensor<T> bb = extract_block(b.value(), gb, i);
        if (opts.trans_a) ab = transpose(ab);
        if (opts.trans_b) bb = transpose(bb);
        gemm(ab.data(), bb.data(), out.data() + i * m * n, m, ka, n, false);
    }
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
        const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
        for (std::size_t i = 0; i < blocks; ++i) {
            std::vector<T> gd(g.data() + i * m * n, g.data() + (i + 1) * m * n);
            const Tensor<T> gi(Shape{m, n}, std::move(gd));
            Tensor<T> ab = extract_block(t.value(ia), ga, i);
            Tensor<T> bb = extract_block(t.value(ib), gb, i);
            const Tensor<T> opa = opts.trans_a ? transpose(ab) : ab;
            const Tensor<T> opb = opts.trans_b ? transpose(bb) : bb;
            if (need_a) {
                // d op(A) = G op(B)^T
                Tensor<T> d = proxyv::matmul_nt(gi, opb);
                if (opts.trans_a) d = transpose(d);
                add_block(t.grad_buffer(ia), ga, i, d);
            }
            if (need_b) {
                Tensor<T> d = proxyv::matmul_tn(opa, gi);
                if (opts.trans_b) d = transpose(d);
                add_block(t.grad_buffer(ib), gb, i, d);
            }
        }
    });
}

template <typename T>
Var<T> block_transpose(Var<T> x, std::size_t blocks) {
    const Tensor<T>& v = x.value();
    const BlockGeom g = block_geom(v, blocks, false, "x");
    Tensor<T> out(Shape{blocks * g.cols, g.rows});
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < g.cols; ++j)
                out[b * g.rows * g.cols + j * g.rows + i] = v[b * g.rows * g.cols + i * g.cols + j];
    const int ix = x.id;
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& gr) {
        Tensor<T>& dx = t.grad_buffer(ix);
        for (std::size_t b = 0; b < blocks; ++b)
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j)
                    dx[b * g.rows * g.cols + i * g.cols + j] += gr[b * g.rows * g.cols + j * g.rows + i];
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "add");
    Tensor<T> out = proxyv::add(a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "mul");
    require_same_shape(a.value(), b.value(), "mul");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) {
            Tensor<T> d(g.shape());
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * t.value(ib)[i];
            t.accumulate(ia, std::move(d));
        }
        if (t.requires_grad(ib)) {
            Tensor<T> d(g.shape());
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * t.value(ia)[i];
            t.accumulate(ib, std::move(d));
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    const int ia = a.id;
    return a.tape->record(proxyv::scale(a.value(), s), {a},
                          [ia, s](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ia, proxyv::scale(g, s)); });
}

namespace {
template <typename T>
T sigmoid(T v) {
    return T{1} / (T{1} + std::exp(-v));
}
// d/dx silu(x) = s + x s (1 - s)
template <typename T>
T silu_grad(T v) {
    const T s = sigmoid(v);
    return s * (T{1} + v * (T{1} - s));
}
}  // namespace

template <typename T>
Var<T> silu(Var<T> a) {
    const int ia = a.id;
    return a.tape->record(proxyv::silu(a.value()), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ia);
        Tensor<T> d(g.shape());
        for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * silu_grad(x[i]);
        t.accumulate(ia, std::move(d));
    });
}

template <typename T>
Var<T> silu_mul(Var<T> gate, Var<T> up) {
    require_same_tape(gate, up, "silu_mul");
    require_same_shape(gate.value(), up.value(), "silu_mul");
    Tensor<T> out(gate.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = proxyv::silu(gate.value()[i]) * up.value()[i];
    const int ig = gate.id, iu = up.id;
    return gate.tape->record(std::move(out), {gate, up}, [ig, iu](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xg = t.value(ig);
        const Tensor<T>& xu = t.value(iu);
        if (t.requires_grad(ig)) {
            Tensor<T> d(g.shape());
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * xu[i] * silu_grad(xg[i]);
            t.accumulate(ig, std::move(d));
        }
        if (t.requires_grad(iu)) {
            Tensor<T> d(g.shape());
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * proxyv::silu(xg[i]);
            t.accumulate(iu, std::move(d));
        }
    });
}

template <typename T>
Var<T> rms_norm(Var<T> x, Var<T> gain, T eps) {
    require_same_tape(x, gain, "rms_norm");
    Tensor<T> out = proxyv::rms_norm(x.value(), gain.value(), eps);
    const int ix = x.id, ig = gain.id;
    return x.tape->record(std::move(out), {x, gain}, [ix, ig, eps](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(ix);
        const Tensor<T>& gv = t.value(ig);
        const std::size_t d = xv.cols();
        const bool need_x = t.requires_grad(ix), need_g = t.requires_grad(ig);
        Tensor<T> dx(xv.shape());
        Tensor<T> dg(gv.shape());
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            const T* xr = xv.data() + r * d;
            const T* gr = g.data() + r * d;
            T ss{0};
            for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
            const T inv = T{1} / std::sqrt(ss / static_cast<T>(d) + eps);
            // y_j = x_j * inv * gain_j ; dinv/dx_k = -inv^3 x_k / d
            T dot{0};
            for (std::size_t j = 0; j < d; ++j) {
                dot += gr[j] * gv[j] * xr[j];
                dg[j] += gr[j] * xr[j] * inv;
            }
            const T coef = dot * inv * inv * inv / static_cast<T>(d);
            T* dr = dx.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) dr[j] = gr[j] * gv[j] * inv - coef * xr[j];
        }
        if (need_x) t.accumulate(ix, std::move(dx));
        if (need_g) t.accumulate(ig, std::move(dg));
    });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
    require_matrix_shape(x, "softmax_rows");
    const int ix = x.id;
    Tensor<T> out = proxyv::softmax(x.value(), 1);
    const int self = static_cast<int>(x.tape->size());
    return x.tape->record(std::move(out), {x}, [ix, self](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& y = t.value(self);
        const std::size_t c = y.cols();
        Tensor<T> d(y.shape());
        for (std::size_t r = 0; r < y.rows(); ++r) {
            T dot{0};
            for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
            for (std::size_t j = 0; j < c; ++j) d[r * c + j] = y[r * c + j] * (g[r * c + j] - dot);
        }
        t.accumulate(ix, std::move(d));
    });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
    const T loss = proxyv::cross_entropy(logits.value(), targets);
    const int il = logits.id;
    std::vector<int> tg(targets.begin(), targets.end());
    return logits.tape->record(Tensor<T>::scalar(loss), {logits}, [il, tg](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& z = t.value(il);
        Tensor<T> d = proxyv::softmax(z, 1);
        const T s = g[0] / static_cast<T>(z.rows());
        for (std::size_t r = 0; r < z.rows(); ++r) {
            d.at(r, static_cast<std::size_t>(tg[r])) -= T{1};
            for (std::size_t j = 0; j < z.cols(); ++j) d.at(r, j) *= s;
        }
        t.accumulate(il, std::move(d));
    });
}

template <typename T>
Var<T> sum(Var<T> x) {
    T s{0};
    for (auto v : x.value().values()) s += v;
    const int ix = x.id;
    return x.tape->record(Tensor<T>::scalar(s), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(ix, Tensor<T>(t.value(ix).shape(), g[0]));
    });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const int> rows) {
    std::vector<RowRef> refs;
    refs.reserve(rows.size());
    for (int r : rows) refs.push_back({0, r});
    const Var<T> src[1] = {x};
    return stitch_rows<T>(src, refs);
}

template <typename T>
Var<T> stitch_rows(std::span<const Var<T>> sources, std::span<const RowRef> layout) {
    if (sources.empty()) throw InputError("stitch_rows: no sources");
    if (layout.empty()) throw InputError("stitch_rows: empty output");
    const std::size_t width = sources[0].value().cols();
    for (const auto& s : sources) {
        if (s.tape != sources[0].tape) throw StateError("stitch_rows: sources on different tapes");
        if (s.value().cols() != width) throw DimensionError("stitch_rows: sources differ in width");
    }
    Tensor<T> out(Shape{layout.size(), width});
    for (std::size_t r = 0; r < layout.size(); ++r) {
        const RowRef ref = layout[r];
        if (ref.source < 0) continue;
        if (static_cast<std::size_t>(ref.source) >= sources.size()) throw InputError("stitch_rows: bad source");
        const Tensor<T>& sv = sources[static_cast<std::size_t>(ref.source)].value();
        if (ref.row < 0 || static_cast<std::size_t>(ref.row) >= sv.rows()) {
            throw InputError("stitch_rows: row " + std::to_string(ref.row) + " outside source of " +
                             std::to_string(sv.rows()) + " rows");
        }
        std::copy_n(sv.data() + static_cast<std::size_t>(ref.row) * width, width, out.data() + r * width);
    }
    std::vector<int> ids;
    for (const auto& s : sources) ids.push_back(s.id);
    std::vector<RowRef> refs(layout.begin(), layout.end());
    return sources[0].tape->record(std::move(out), sources, [ids, refs, width](Tape<T>& t, const Tensor<T>& g) {
        std::vector<Tensor<T>*> bufs(ids.size(), nullptr);
        for (std::size_t s = 0; s < ids.size(); ++s) {
            if (t.requires_grad(ids[s])) bufs[s] = &t.grad_buffer(ids[s]);
        }
        for (std::size_t r = 0; r < refs.size(); ++r) {
            if (refs[r].source < 0) continue;
            Tensor<T>* b = bufs[static_cast<std::size_t>(refs[r].source)];
            if (b == nullptr) continue;
            T* dst = b->data() + static_cast<std::size_t>(refs[r].row) * width;
            const T* src = g.data() + r * width;
            for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
    });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "concat_cols");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw DimensionError("concat_cols: row counts differ " + shape_to_string(av.shape()) + " vs " +
                             shape_to_string(bv.shape()));
    }
    const std::size_t ca = av.cols(), cb = bv.cols(), rows = av.rows();
    Tensor<T> out(Shape{rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) {
            Tensor<T> d(Shape{rows, ca});
            for (std::size_t r = 0; r < rows; ++r) std::copy_n(g.data() + r * (ca + cb), ca, d.data() + r * ca);
            t.accumulate(ia, std::move(d));
        }
        if (t.requires_grad(ib)) {
            Tensor<T> d(Shape{rows, cb});
            for (std::size_t r = 0; r < rows; ++r)
                std::copy_n(g.data() + r * (ca + cb) + ca, cb, d.data() + r * cb);
            t.accumulate(ib, std::move(d));
        }
    });
}

#define PROXYV_INSTANTIATE_AD(T)                                                              \
    template Var<T> matmul(Var<T>, Var<T>);                                                   \
    template Var<T> matmul_nt(Var<T>, Var<T>);                                                \
    template Var<T> block_matmul(Var<T>, Var<T>, std::size_t, BlockMatmulOptions);            \
    template Var<T> block_transpose(Var<T>, std::size_t);                                     \
    template Var<T> add(Var<T>, Var<T>);                                                      \
    template Var<T> mul(Var<T>, Var<T>);                                                      \
    template Var<T> scale(Var<T>, T);                                                         \
    template Var<T> silu(Var<T>);                                                             \
    template Var<T> silu_mul(Var<T>, Var<T>);                                                 \
    template Var<T> rms_norm(Var<T>, Var<T>, T);                                              \
    template Var<T> softmax_rows(Var<T>);                                                     \
    template Var<T> cross_entropy(Var<T>, std::span<const int>);                              \
    template Var<T> sum(Var<T>);                                                              \
    template Var<T> gather_rows(Var<T>, std::span<const int>);                                \
    template Var<T> stitch_rows(std::span<const Var<T>>, std::span<const RowRef>);            \
    template Var<T> concat_cols(Var<T>, Var<T>);

PROXYV_INSTANTIATE_AD(float)
PROXYV_INSTANTIATE_AD(double)

}  // namespace ad
}  // namespace proxyv
