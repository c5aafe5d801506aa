#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dalm/nn/tape.hpp"
#include "dalm/rng.hpp"

namespace dalm::nn {

struct ModelConfig {
    int layers = 2;
    int hidden_dim = 64;
    int heads = 4;
    int ffn_dim = 256;
    int max_seq_len = 64;
    int vocab_size = 0;
    double dropout_rate = 0.0;

    void validate() const {
        if (layers < 0) throw DataError("model config: layers must be >= 0");
        if (hidden_dim < 1 || heads < 1 || ffn_dim < 1 || max_seq_len < 1 || vocab_size < 1)
            throw DataError("model config: all dimensions must be >= 1");
        if (hidden_dim % heads != 0) throw DataError("model config: hidden_dim % heads != 0");
        if (hidden_dim % 2 != 0) throw DataError("model config: hidden_dim must be even");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw DataError("model config: dropout_rate must be in [0,1)");
    }
};

// Scaled sinusoidal position table: row p holds sigma*sin(p/10000^(2i/dim))
// at even columns and sigma*cos at odd columns, sigma = 1/sqrt(dim).
template <class T>
Tensor<T> sinusoidal_positions(long seq_len, long dim) {
    if (dim % 2 != 0) throw DataError("sinusoidal_positions: dim must be even");
    Tensor<T> out({seq_len, dim});
    const T sigma = T(1) / std::sqrt(static_cast<T>(dim));
    for (long p = 0; p < seq_len; ++p) {
        for (long i = 0; i < dim / 2; ++i) {
            const T angle = static_cast<T>(p) /
                            std::pow(T(10000), static_cast<T>(2 * i) / static_cast<T>(dim));
            out.at(p, 2 * i) = sigma * std::sin(angle);
            out.at(p, 2 * i + 1) = sigma * std::cos(angle);
        }
    }
    return out;
}

// All weights of one pre-norm encoder with a tied MLM head. Every linear map
// is bias-free; the only vectors are LayerNorm gains/offsets.
template <class T>
struct EncoderParams {
    ModelConfig cfg;
    Parameter<T>* tok_emb = nullptr;  // [vocab, hidden]; also the MLM output projection

    struct Block {
        Parameter<T>*ln1_g, *ln1_b, *wq, *wk, *wv, *wo, *ln2_g, *ln2_b, *w1, *w2;
    };
    std::vector<Block> blocks;
    Parameter<T>*lnf_g = nullptr, *lnf_b = nullptr;

    std::vector<Parameter<T>*> all() const {
        std::vector<Parameter<T>*> out = {tok_emb};
        for (const Block& b : blocks)
            for (Parameter<T>* p : {b.ln1_g, b.ln1_b, b.wq, b.wk, b.wv, b.wo, b.ln2_g, b.ln2_b, b.w1, b.w2})
                out.push_back(p);
        out.push_back(lnf_g);
        out.push_back(lnf_b);
        return out;
    }
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-12;

// Initialization is seeded per tensor name, so adding parameters elsewhere
// never changes the draws for existing ones.
template <class T>
void init_normal(Parameter<T>& p, uint64_t root_seed, double stddev = kInitStd) {
    Rng rng(root_seed, "init:" + p.name);
    for (T& v : p.value.v) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <class T>
void init_const(Parameter<T>& p, T value) {
    std::fill(p.value.v.begin(), p.value.v.end(), value);
}

template <class T>
EncoderParams<T> build_encoder(ParamRegistry<T>& reg, const ModelConfig& cfg, uint64_t seed,
                               const std::string& prefix = "") {
    cfg.validate();
    EncoderParams<T> m;
    m.cfg = cfg;
    const long h = cfg.hidden_dim, f = cfg.ffn_dim, v = cfg.vocab_size;

    m.tok_emb = &reg.add(prefix + "emb.tok", ParamKind::Embedding, {v, h});
    init_normal(*m.tok_emb, seed);

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string bp = prefix + "blk" + std::to_string(l) + ".";
        typename EncoderParams<T>::Block b;
        b.ln1_g = &reg.add(bp + "ln1.gain", ParamKind::NormGain, {h});
        b.ln1_b = &reg.add(bp + "ln1.offset", ParamKind::NormOffset, {h});
        b.wq = &reg.add(bp + "attn.wq", ParamKind::LinearWeight, {h, h});
        b.wk = &reg.add(bp + "attn.wk", ParamKind::LinearWeight, {h, h});
        b.wv = &reg.add(bp + "attn.wv", ParamKind::LinearWeight, {h, h});
        b.wo = &reg.add(bp + "attn.wo", ParamKind::LinearWeight, {h, h});
        b.ln2_g = &reg.add(bp + "ln2.gain", ParamKind::NormGain, {h});
        b.ln2_b = &reg.add(bp + "ln2.offset", ParamKind::NormOffset, {h});
        b.w1 = &reg.add(bp + "ffn.w1", ParamKind::LinearWeight, {h, f});
        b.w2 = &reg.add(bp + "ffn.w2", ParamKind::LinearWeight, {f, h});
        init_const(*b.ln1_g, T(1));
        init_const(*b.ln1_b, T(0));
        init_normal(*b.wq, seed);
        init_normal(*b.wk, seed);
        init_normal(*b.wv, seed);
        init_normal(*b.wo, seed);
        init_const(*b.ln2_g, T(1));
        init_const(*b.ln2_b, T(0));
        init_normal(*b.w1, seed);
        init_normal(*b.w2, seed);
        m.blocks.push_back(b);
    }
    m.lnf_g = &reg.add(prefix + "lnf.gain", ParamKind::NormGain, {h});
    m.lnf_b = &reg.add(prefix + "lnf.offset", ParamKind::NormOffset, {h});
    init_const(*m.lnf_g, T(1));
    init_const(*m.lnf_b, T(0));
    return m;
}

// Attention probabilities captured per layer when requested:
// trace[layer] has shape [heads*seq, seq] with head h occupying rows
// [h*seq, (h+1)*seq).
template <class T>
struct AttnTrace {
    std::vector<Tensor<T>> layers;
};

// token embedding + scaled sinusoidal positions for a given id sequence.
template <class T>
typename Tape<T>::Var embed_input(Tape<T>& t, const EncoderParams<T>& m,
                                  const std::vector<int32_t>& ids) {
    auto tok = t.rows(t.param(*m.tok_emb), ids);
    auto pos = t.input(sinusoidal_positions<T>(static_cast<long>(ids.size()), m.cfg.hidden_dim));
    return t.add(tok, pos);
}

// Pre-norm residual stack over an already-assembled input embedding:
//   x += Attn(LN(x)); x += FFN(LN(x)); final LN afterwards.
// `mask[i] != 0` marks position i as a real (non-padding) token.
template <class T>
typename Tape<T>::Var encoder_forward(Tape<T>& t, const EncoderParams<T>& m,
                                      typename Tape<T>::Var x, const std::vector<uint8_t>& mask,
                                      Rng* dropout_rng = nullptr, AttnTrace<T>* trace = nullptr) {
    const long seq = t.val(x).rows();
    if (static_cast<long>(mask.size()) != seq)
        throw std::logic_error("encoder_forward: mask length != sequence length");
    if (t.val(x).cols() != m.cfg.hidden_dim)
        throw std::logic_error("encoder_forward: input width != hidden_dim");
    const int heads = m.cfg.heads;
    const long hd = m.cfg.hidden_dim / heads;
    const T att_scale = T(1) / std::sqrt(static_cast<T>(hd));
    const double rate = m.cfg.dropout_rate;

    for (const auto& b : m.blocks) {
        auto xn = t.layer_norm(x, t.param(*b.ln1_g), t.param(*b.ln1_b), T(kLayerNormEps));
        auto q = t.matmul(xn, t.param(*b.wq));
        auto k = t.matmul(xn, t.param(*b.wk));
        auto v = t.matmul(xn, t.param(*b.wv));
        std::vector<typename Tape<T>::Var> head_ctx;
        Tensor<T> layer_probs;
        if (trace) layer_probs = Tensor<T>({heads * seq, seq});
        for (int hix = 0; hix < heads; ++hix) {
            auto qh = t.slice_cols(q, hix * hd, (hix + 1) * hd);
            auto kh = t.slice_cols(k, hix * hd, (hix + 1) * hd);
            auto vh = t.slice_cols(v, hix * hd, (hix + 1) * hd);
            auto scores = t.scale(t.matmul_nt(qh, kh), att_scale);
            auto probs = t.softmax_rows_masked(scores, mask);
            if (trace) {
                const Tensor<T>& p = t.val(probs);
                for (long i = 0; i < seq; ++i)
                    for (long j = 0; j < seq; ++j) layer_probs.at(hix * seq + i, j) = p.at(i, j);
            }
            if (rate > 0.0 && dropout_rng) probs = t.dropout(probs, rate, *dropout_rng);
            head_ctx.push_back(t.matmul(probs, vh));
        }
        if (trace) trace->layers.push_back(std::move(layer_probs));
        auto ctx = heads == 1 ? head_ctx[0] : t.concat_cols(head_ctx);
        auto attn_out = t.matmul(ctx, t.param(*b.wo));
        if (rate > 0.0 && dropout_rng) attn_out = t.dropout(attn_out, rate, *dropout_rng);
        x = t.add(x, attn_out);

        auto xn2 = t.layer_norm(x, t.param(*b.ln2_g), t.param(*b.ln2_b), T(kLayerNormEps));
        auto ffn = t.matmul(t.gelu(t.matmul(xn2, t.param(*b.w1))), t.param(*b.w2));
        if (rate > 0.0 && dropout_rng) ffn = t.dropout(ffn, rate, *dropout_rng);
        x = t.add(x, ffn);
    }
    return t.layer_norm(x, t.param(*m.lnf_g), t.param(*m.lnf_b), T(kLayerNormEps));
}

// Tied-weight MLM head: logits = hidden * tok_emb^T.
template <class T>
typename Tape<T>::Var mlm_logits(Tape<T>& t, const EncoderParams<T>& m,
                                 typename Tape<T>::Var hidden) {
    return t.matmul_nt(hidden, t.param(*m.tok_emb));
}

}  // namespace dalm::nn
