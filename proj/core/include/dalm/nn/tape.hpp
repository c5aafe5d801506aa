#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dalm/nn/tensor.hpp"
#include "dalm/rng.hpp"

namespace dalm::nn {

// LinearBias exists so the registry can assert it never appears: every linear
// map in this codebase is bias-free.
enum class ParamKind { Embedding, LinearWeight, LinearBias, NormGain, NormOffset, Scalar };

template <class T>
struct Parameter {
    int uid = -1;
    std::string name;
    ParamKind kind = ParamKind::LinearWeight;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
};

template <class T>
class ParamRegistry {
public:
    Parameter<T>& add(std::string name, ParamKind kind, std::vector<long> shape) {
        if (kind == ParamKind::LinearBias)
            throw std::logic_error("linear bias parameters are disabled by design: " + name);
        auto p = std::make_unique<Parameter<T>>();
        p->uid = static_cast<int>(items_.size());
        p->name = std::move(name);
        p->kind = kind;
        p->value = Tensor<T>(shape);
        p->grad = Tensor<T>(std::move(shape));
        items_.push_back(std::move(p));
        return *items_.back();
    }

    Parameter<T>* find(std::string_view name) {
        for (auto& p : items_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    void zero_grads() {
        for (auto& p : items_) p->grad.zero();
    }

    size_t size() const { return items_.size(); }
    Parameter<T>& operator[](size_t i) { return *items_[i]; }
    const Parameter<T>& operator[](size_t i) const { return *items_[i]; }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<std::unique_ptr<Parameter<T>>> items_;
};

// Per-worker gradient buffer; reduced into Parameter::grad in a fixed order
// so results do not depend on thread scheduling.
template <class T>
struct GradSink {
    std::vector<Tensor<T>> slots;

    void accumulate(const Parameter<T>& p, const Tensor<T>& g) {
        if (slots.size() <= static_cast<size_t>(p.uid)) slots.resize(static_cast<size_t>(p.uid) + 1);
        Tensor<T>& slot = slots[static_cast<size_t>(p.uid)];
        if (slot.numel() == 0) slot = Tensor<T>(p.grad.shape);
        for (long i = 0; i < g.numel(); ++i) slot.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
    }

    void reduce_into(ParamRegistry<T>& reg) {
        for (size_t uid = 0; uid < slots.size(); ++uid) {
            Tensor<T>& slot = slots[uid];
            if (slot.numel() == 0) continue;
            Tensor<T>& grad = reg[uid].grad;
            for (long i = 0; i < slot.numel(); ++i)
                grad.v[static_cast<size_t>(i)] += slot.v[static_cast<size_t>(i)];
        }
    }
};

// Reverse-mode autodiff over 2-D tensors. Ops append entries; entry order is
// a valid topological order, so backward() is a single reverse sweep.
template <class T>
class Tape {
public:
    using Var = int;

    explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    const Tensor<T>& val(Var x) const { return entries_[static_cast<size_t>(x)].value; }
    Tensor<T>& grad(Var x) { return entries_[static_cast<size_t>(x)].grad; }
    bool needs_grad(Var x) const { return entries_[static_cast<size_t>(x)].needs_grad; }

    Var input(Tensor<T> value) {
        return push(std::move(value), false, {}, nullptr, "input");
    }

    // Frozen parameters enter the graph as constants: no gradient storage, no
    // backward work anywhere downstream of them alone.
    Var param(Parameter<T>& p) {
        auto it = param_vars_.find(&p);
        if (it != param_vars_.end()) return it->second;
        Var v = push(p.value, p.trainable, {}, nullptr, "param");
        entries_[static_cast<size_t>(v)].leaf = p.trainable ? &p : nullptr;
        param_vars_.emplace(&p, v);
        return v;
    }

    // y[i,:] = emb[ids[i],:]
    Var rows(Var emb, std::vector<int32_t> ids) {
        const Tensor<T>& e = val(emb);
        const long dim = e.cols();
        Tensor<T> out({static_cast<long>(ids.size()), dim});
        for (size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || ids[i] >= e.rows())
                throw DataError("rows: id out of range: " + std::to_string(ids[i]));
            std::copy_n(&e.at(ids[i], 0), dim, &out.at(static_cast<long>(i), 0));
        }
        return push(std::move(out), needs_grad(emb), {emb},
                    [ids = std::move(ids), dim](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        Tensor<T>& ge = t.grad(in[0]);
                        const Tensor<T>& go = t.grad(self);
                        for (size_t i = 0; i < ids.size(); ++i)
                            for (long j = 0; j < dim; ++j)
                                ge.at(ids[i], j) += go.at(static_cast<long>(i), j);
                    },
                    "rows");
    }

    Var add(Var a, Var b) {
        const Tensor<T>& ta = val(a);
        const Tensor<T>& tb = val(b);
        if (ta.shape != tb.shape)
            throw std::logic_error("add: shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
        Tensor<T> out = ta;
        for (long i = 0; i < out.numel(); ++i) out.v[static_cast<size_t>(i)] += tb.v[static_cast<size_t>(i)];
        return push(std::move(out), needs_grad(a) || needs_grad(b), {a, b},
                    [](Tape& t, Var self, const std::vector<Var>& in) {
                        const Tensor<T>& go = t.grad(self);
                        for (Var v : in) {
                            if (!t.needs_grad(v)) continue;
                            Tensor<T>& g = t.grad(v);
                            for (long i = 0; i < go.numel(); ++i)
                                g.v[static_cast<size_t>(i)] += go.v[static_cast<size_t>(i)];
                        }
                    },
                    "add");
    }

    Var matmul(Var a, Var b) {
        const Tensor<T>& ta = val(a);
        const Tensor<T>& tb = val(b);
        if (ta.cols() != tb.rows())
            throw std::logic_error("matmul: inner dims " + shape_str(ta) + " * " + shape_str(tb));
        Tensor<T> out({ta.rows(), tb.cols()});
        matmul_acc(ta, tb, out);
        return push(std::move(out), needs_grad(a) || needs_grad(b), {a, b},
                    [](Tape& t, Var self, const std::vector<Var>& in) {
                        const Tensor<T>& go = t.grad(self);
                        if (t.needs_grad(in[0])) matmul_nt_acc(go, t.val(in[1]), t.grad(in[0]));
                        if (t.needs_grad(in[1])) matmul_tn_acc(t.val(in[0]), go, t.grad(in[1]));
                    },
                    "matmul");
    }

    // C = A * B^T ; used for attention scores and tied-embedding logits.
    Var matmul_nt(Var a, Var b) {
        const Tensor<T>& ta = val(a);
        const Tensor<T>& tb = val(b);
        if (ta.cols() != tb.cols())
            throw std::logic_error("matmul_nt: inner dims " + shape_str(ta) + " vs " + shape_str(tb));
        Tensor<T> out({ta.rows(), tb.rows()});
        matmul_nt_acc(ta, tb, out);
        return push(std::move(out), needs_grad(a) || needs_grad(b), {a, b},
                    [](Tape& t, Var self, const std::vector<Var>& in) {
                        const Tensor<T>& go = t.grad(self);
                        if (t.needs_grad(in[0])) matmul_acc(go, t.val(in[1]), t.grad(in[0]));
                        if (t.needs_grad(in[1])) matmul_tn_acc(go, t.val(in[0]), t.grad(in[1]));
                    },
                    "matmul_nt");
    }

    Var scale(Var a, T c) {
        Tensor<T> out = val(a);
        for (T& x : out.v) x *= c;
        return push(std::move(out), needs_grad(a), {a},
                    [c](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& go = t.grad(self);
                        Tensor<T>& g = t.grad(in[0]);
                        for (long i = 0; i < go.numel(); ++i)
                            g.v[static_cast<size_t>(i)] += c * go.v[static_cast<size_t>(i)];
                    },
                    "scale");
    }

    // y = s * a with s a [1]-shaped variable (learnable scalar).
    Var scale_by_scalar(Var a, Var s) {
        const Tensor<T>& ts = val(s);
        if (ts.numel() != 1) throw std::logic_error("scale_by_scalar: scale must be a [1] tensor");
        const T c = ts.v[0];
        Tensor<T> out = val(a);
        for (T& x : out.v) x *= c;
        return push(std::move(out), needs_grad(a) || needs_grad(s), {a, s},
                    [c](Tape& t, Var self, const std::vector<Var>& in) {
                        const Tensor<T>& go = t.grad(self);
                        if (t.needs_grad(in[0])) {
                            Tensor<T>& g = t.grad(in[0]);
                            for (long i = 0; i < go.numel(); ++i)
                                g.v[static_cast<size_t>(i)] += c * go.v[static_cast<size_t>(i)];
                        }
                        if (t.needs_grad(in[1])) {
                            const Tensor<T>& ta = t.val(in[0]);
                            T acc = T(0);
                            for (long i = 0; i < go.numel(); ++i)
                                acc += go.v[static_cast<size_t>(i)] * ta.v[static_cast<size_t>(i)];
                            t.grad(in[1]).v[0] += acc;
                        }
                    },
                    "scale_by_scalar");
    }

    // Row-wise layer norm with gain/offset; normalization stats exclude them.
    Var layer_norm(Var x, Var gain, Var offset, T eps) {
        const Tensor<T>& tx = val(x);
        const long n = tx.rows(), h = tx.cols();
        const Tensor<T>& g = val(gain);
        const Tensor<T>& b = val(offset);
        if (g.numel() != h || b.numel() != h) throw std::logic_error("layer_norm: gain/offset dim");
        auto cache = std::make_shared<Tensor<T>>(Tensor<T>({n, h}));  // normalized rows
        auto inv = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
        Tensor<T> out({n, h});
        for (long i = 0; i < n; ++i) {
            T mean = T(0);
            for (long j = 0; j < h; ++j) mean += tx.at(i, j);
            mean /= static_cast<T>(h);
            T var = T(0);
            for (long j = 0; j < h; ++j) {
                T d = tx.at(i, j) - mean;
                var += d * d;
            }
            var /= static_cast<T>(h);
            T iv = T(1) / std::sqrt(var + eps);
            (*inv)[static_cast<size_t>(i)] = iv;
            for (long j = 0; j < h; ++j) {
                T xhat = (tx.at(i, j) - mean) * iv;
                cache->at(i, j) = xhat;
                out.at(i, j) = g.v[static_cast<size_t>(j)] * xhat + b.v[static_cast<size_t>(j)];
            }
        }
        return push(std::move(out), needs_grad(x) || needs_grad(gain) || needs_grad(offset),
                    {x, gain, offset},
                    [cache, inv, n, h](Tape& t, Var self, const std::vector<Var>& in) {
                        const Tensor<T>& go = t.grad(self);
                        const Tensor<T>& g = t.val(in[1]);
                        if (t.needs_grad(in[1])) {
                            Tensor<T>& gg = t.grad(in[1]);
                            for (long i = 0; i < n; ++i)
                                for (long j = 0; j < h; ++j)
                                    gg.v[static_cast<size_t>(j)] += go.at(i, j) * cache->at(i, j);
                        }
                        if (t.needs_grad(in[2])) {
                            Tensor<T>& gb = t.grad(in[2]);
                            for (long i = 0; i < n; ++i)
                                for (long j = 0; j < h; ++j) gb.v[static_cast<size_t>(j)] += go.at(i, j);
                        }
                        if (t.needs_grad(in[0])) {
                            Tensor<T>& gx = t.grad(in[0]);
                            for (long i = 0; i < n; ++i) {
                                T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                                for (long j = 0; j < h; ++j) {
                                    T dxhat = go.at(i, j) * g.v[static_cast<size_t>(j)];
                                    sum_dxhat += dxhat;
                                    sum_dxhat_xhat += dxhat * cache->at(i, j);
                                }
                                const T iv = (*inv)[static_cast<size_t>(i)];
                                const T inv_h = T(1) / static_cast<T>(h);
                                for (long j = 0; j < h; ++j) {
                                    T dxhat = go.at(i, j) * g.v[static_cast<size_t>(j)];
                                    gx.at(i, j) += iv * (dxhat - sum_dxhat * inv_h -
                                                         cache->at(i, j) * sum_dxhat_xhat * inv_h);
                                }
                            }
                        }
                    },
                    "layer_norm");
    }

    Var gelu(Var x) {
        static const T kInvSqrt2 = T(1) / std::sqrt(T(2));
        static const T kInvSqrt2Pi = T(1) / std::sqrt(T(2) * T(M_PI));
        const Tensor<T>& tx = val(x);
        Tensor<T> out = tx;
        for (T& v : out.v) v = T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2));
        return push(std::move(out), needs_grad(x), {x},
                    [](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& go = t.grad(self);
                        const Tensor<T>& tx = t.val(in[0]);
                        Tensor<T>& gx = t.grad(in[0]);
                        for (long i = 0; i < go.numel(); ++i) {
                            const T v = tx.v[static_cast<size_t>(i)];
                            const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
                            const T pdf = std::exp(T(-0.5) * v * v) * kInvSqrt2Pi;
                            gx.v[static_cast<size_t>(i)] += go.v[static_cast<size_t>(i)] * (cdf + v * pdf);
                        }
                    },
                    "gelu");
    }

    // Row softmax over the keys flagged valid; invalid keys get probability 0.
    // The -inf masking never materializes: excluded keys are simply skipped.
    Var softmax_rows_masked(Var scores, std::vector<uint8_t> key_valid) {
        const Tensor<T>& ts = val(scores);
        const long n = ts.rows(), k = ts.cols();
        if (static_cast<long>(key_valid.size()) != k)
            throw std::logic_error("softmax: mask length != key count");
        bool any = false;
        for (uint8_t m : key_valid) any |= (m != 0);
        if (!any) throw std::logic_error("softmax: no valid keys");
        Tensor<T> out({n, k});
        for (long i = 0; i < n; ++i) {
            T mx = -std::numeric_limits<T>::infinity();
            for (long j = 0; j < k; ++j)
                if (key_valid[static_cast<size_t>(j)]) mx = std::max(mx, ts.at(i, j));
            T z = T(0);
            for (long j = 0; j < k; ++j) {
                if (!key_valid[static_cast<size_t>(j)]) continue;
                T e = std::exp(ts.at(i, j) - mx);
                out.at(i, j) = e;
                z += e;
            }
            const T invz = T(1) / z;
            for (long j = 0; j < k; ++j)
                out.at(i, j) = key_valid[static_cast<size_t>(j)] ? out.at(i, j) * invz : T(0);
        }
        return push(std::move(out), needs_grad(scores), {scores},
                    [](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& p = t.val(self);
                        const Tensor<T>& go = t.grad(self);
                        Tensor<T>& gx = t.grad(in[0]);
                        const long n = p.rows(), k = p.cols();
                        for (long i = 0; i < n; ++i) {
                            T dot = T(0);
                            for (long j = 0; j < k; ++j) dot += go.at(i, j) * p.at(i, j);
                            for (long j = 0; j < k; ++j)
                                gx.at(i, j) += p.at(i, j) * (go.at(i, j) - dot);
                        }
                    },
                    "softmax");
    }

    Var slice_cols(Var x, long c0, long c1) {
        const Tensor<T>& tx = val(x);
        if (c0 < 0 || c1 > tx.cols() || c0 >= c1) throw std::logic_error("slice_cols: bad range");
        Tensor<T> out({tx.rows(), c1 - c0});
        for (long i = 0; i < tx.rows(); ++i)
            std::copy_n(&tx.at(i, c0), c1 - c0, &out.at(i, 0));
        return push(std::move(out), needs_grad(x), {x},
                    [c0, c1](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& go = t.grad(self);
                        Tensor<T>& gx = t.grad(in[0]);
                        for (long i = 0; i < go.rows(); ++i)
                            for (long j = 0; j < c1 - c0; ++j) gx.at(i, c0 + j) += go.at(i, j);
                    },
                    "slice_cols");
    }

    Var concat_cols(const std::vector<Var>& xs) {
        if (xs.empty()) throw std::logic_error("concat_cols: empty");
        long rows = val(xs[0]).rows();
        long total = 0;
        bool needs = false;
        for (Var x : xs) {
            if (val(x).rows() != rows) throw std::logic_error("concat_cols: row mismatch");
            total += val(x).cols();
            needs |= needs_grad(x);
        }
        Tensor<T> out({rows, total});
        long off = 0;
        for (Var x : xs) {
            const Tensor<T>& tx = val(x);
            for (long i = 0; i < rows; ++i) std::copy_n(&tx.at(i, 0), tx.cols(), &out.at(i, off));
            off += tx.cols();
        }
        return push(std::move(out), needs, xs,
                    [](Tape& t, Var self, const std::vector<Var>& in) {
                        const Tensor<T>& go = t.grad(self);
                        long off = 0;
                        for (Var x : in) {
                            const long c = t.val(x).cols();
                            if (t.needs_grad(x)) {
                                Tensor<T>& gx = t.grad(x);
                                for (long i = 0; i < go.rows(); ++i)
                                    for (long j = 0; j < c; ++j) gx.at(i, j) += go.at(i, off + j);
                            }
                            off += c;
                        }
                    },
                    "concat_cols");
    }

    Var select_rows(Var x, std::vector<long> idx) {
        const Tensor<T>& tx = val(x);
        Tensor<T> out({static_cast<long>(idx.size()), tx.cols()});
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= tx.rows()) throw std::logic_error("select_rows: out of range");
            std::copy_n(&tx.at(idx[i], 0), tx.cols(), &out.at(static_cast<long>(i), 0));
        }
        return push(std::move(out), needs_grad(x), {x},
                    [idx = std::move(idx)](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& go = t.grad(self);
                        Tensor<T>& gx = t.grad(in[0]);
                        for (size_t i = 0; i < idx.size(); ++i)
                            for (long j = 0; j < go.cols(); ++j)
                                gx.at(idx[i], j) += go.at(static_cast<long>(i), j);
                    },
                    "select_rows");
    }

    // out[targets[i], :] = x[i, :], all other rows zero. Targets must be unique.
    Var scatter_rows(Var x, std::vector<long> targets, long out_rows) {
        const Tensor<T>& tx = val(x);
        if (static_cast<long>(targets.size()) != tx.rows())
            throw std::logic_error("scatter_rows: target count != rows");
        Tensor<T> out({out_rows, tx.cols()});
        for (size_t i = 0; i < targets.size(); ++i) {
            if (targets[i] < 0 || targets[i] >= out_rows)
                throw std::logic_error("scatter_rows: target out of range");
            std::copy_n(&tx.at(static_cast<long>(i), 0), tx.cols(), &out.at(targets[i], 0));
        }
        return push(std::move(out), needs_grad(x), {x},
                    [targets = std::move(targets)](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& go = t.grad(self);
                        Tensor<T>& gx = t.grad(in[0]);
                        for (size_t i = 0; i < targets.size(); ++i)
                            for (long j = 0; j < go.cols(); ++j)
                                gx.at(static_cast<long>(i), j) += go.at(targets[i], j);
                    },
                    "scatter_rows");
    }

    Var dropout(Var x, double rate, Rng& rng) {
        if (rate <= 0.0) return x;
        if (rate >= 1.0) throw std::logic_error("dropout: rate must be < 1");
        const Tensor<T>& tx = val(x);
        const T keep = T(1) - static_cast<T>(rate);
        auto mask = std::make_shared<std::vector<uint8_t>>(tx.v.size());
        Tensor<T> out = tx;
        for (size_t i = 0; i < out.v.size(); ++i) {
            bool on = rng.uniform01() >= rate;
            (*mask)[i] = on;
            out.v[i] = on ? out.v[i] / keep : T(0);
        }
        return push(std::move(out), needs_grad(x), {x},
                    [mask, keep](Tape& t, Var self, const std::vector<Var>& in) {
                        if (!t.needs_grad(in[0])) return;
                        const Tensor<T>& go = t.grad(self);
                        Tensor<T>& gx = t.grad(in[0]);
                        for (size_t i = 0; i < mask->size(); ++i)
                            if ((*mask)[i]) gx.v[i] += go.v[i] / keep;
                    },
                    "dropout");
    }

    struct CeResult {
        Var loss_sum = -1;   // scalar: sum of NLL over masked positions
        long masked = 0;
        long correct = 0;    // argmax == label at masked positions
    };

    // Cross entropy summed (not averaged) over the positions where mask != 0.
    CeResult masked_ce_sum(Var logits, const std::vector<int32_t>& labels,
                           const std::vector<uint8_t>& mask) {
        const Tensor<T>& tl = val(logits);
        const long n = tl.rows(), vsize = tl.cols();
        if (static_cast<long>(labels.size()) != n || static_cast<long>(mask.size()) != n)
            throw std::logic_error("masked_ce_sum: label/mask length mismatch");
        long masked = 0;
        for (uint8_t m : mask) masked += (m != 0);
        if (masked == 0) throw DataError("masked_ce_sum: loss mask selects no positions");

        auto probs = std::make_shared<Tensor<T>>(Tensor<T>({n, vsize}));
        T loss = T(0);
        long correct = 0;
        for (long i = 0; i < n; ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            const int32_t label = labels[static_cast<size_t>(i)];
            if (label < 0 || label >= vsize) throw std::logic_error("masked_ce_sum: label out of range");
            T mx = tl.at(i, 0);
            long argmax = 0;
            for (long j = 1; j < vsize; ++j)
                if (tl.at(i, j) > mx) mx = tl.at(i, j), argmax = j;
            T z = T(0);
            for (long j = 0; j < vsize; ++j) {
                T e = std::exp(tl.at(i, j) - mx);
                probs->at(i, j) = e;
                z += e;
            }
            const T invz = T(1) / z;
            for (long j = 0; j < vsize; ++j) probs->at(i, j) *= invz;
            loss += -(tl.at(i, label) - mx - std::log(z));
            correct += (argmax == label);
        }

        Tensor<T> out({1});
        out.v[0] = loss;
        Var loss_var =
            push(std::move(out), needs_grad(logits), {logits},
                 [probs, labels, mask](Tape& t, Var self, const std::vector<Var>& in) {
                     if (!t.needs_grad(in[0])) return;
                     const T g = t.grad(self).v[0];
                     Tensor<T>& gl = t.grad(in[0]);
                     const long n = gl.rows(), vsize = gl.cols();
                     for (long i = 0; i < n; ++i) {
                         if (!mask[static_cast<size_t>(i)]) continue;
                         const int32_t label = labels[static_cast<size_t>(i)];
                         for (long j = 0; j < vsize; ++j) {
                             T d = probs->at(i, j) - (j == label ? T(1) : T(0));
                             gl.at(i, j) += g * d;
                         }
                     }
                 },
                 "masked_ce_sum");
        return {loss_var, masked, correct};
    }

    // Seeds the scalar root with `seed_grad` and sweeps the tape in reverse.
    // Parameter gradients land in Parameter::grad (or in `sink` if given).
    void backward(Var root, T seed_grad = T(1), GradSink<T>* sink = nullptr) {
        Entry& r = entries_[static_cast<size_t>(root)];
        if (r.value.numel() != 1) throw std::logic_error("backward: root must be scalar");
        if (!r.needs_grad) return;
        for (Entry& e : entries_) {
            if (e.needs_grad) {
                e.grad = Tensor<T>(e.value.shape);
            }
        }
        r.grad.v[0] = seed_grad;
        for (int i = root; i >= 0; --i) {
            Entry& e = entries_[static_cast<size_t>(i)];
            if (!e.needs_grad) continue;
            if (e.back) e.back(*this, i, e.inputs);
            if (e.leaf) {
                if (sink) {
                    sink->accumulate(*e.leaf, e.grad);
                } else {
                    for (long j = 0; j < e.grad.numel(); ++j)
                        e.leaf->grad.v[static_cast<size_t>(j)] += e.grad.v[static_cast<size_t>(j)];
                }
            }
        }
    }

    size_t size() const { return entries_.size(); }

private:
    using BackFn = std::function<void(Tape&, Var, const std::vector<Var>&)>;

    struct Entry {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<Var> inputs;
        BackFn back;
        Parameter<T>* leaf = nullptr;
        bool needs_grad = false;
    };

    Var push(Tensor<T> value, bool needs, std::vector<Var> inputs, BackFn back, const char* op) {
        if (check_finite_ && !value.all_finite())
            throw NumericError(std::string("non-finite values produced by op '") + op + "'");
        Entry e;
        e.value = std::move(value);
        e.inputs = std::move(inputs);
        e.back = std::move(back);
        e.needs_grad = needs;
        entries_.push_back(std::move(e));
        return static_cast<Var>(entries_.size() - 1);
    }

    std::vector<Entry> entries_;
    std::unordered_map<Parameter<T>*, Var> param_vars_;
    bool check_finite_;
};

}  // namespace dalm::nn
