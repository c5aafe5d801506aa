#include <benchmark/benchmark.h>

#include <sstream>
#include <vector>

#include "dalm/chunker.hpp"
#include "dalm/nn/encoder.hpp"
#include "dalm/nn/tape.hpp"
#include "dalm/rng.hpp"
#include "dalm/synth.hpp"
#include "dalm/tokenizer.hpp"

namespace {

dalm::nn::Tensor<float> random_tensor(long rows, long cols, uint64_t seed) {
    dalm::nn::Tensor<float> t({rows, cols});
    dalm::Rng rng(seed, "bench");
    for (float& v : t.v) v = static_cast<float>(rng.normal(0.0, 1.0));
    return t;
}

void BM_tape_matmul(benchmark::State& state) {
    const long n = state.range(0);
    const dalm::nn::Tensor<float> a = random_tensor(n, n, 1);
    const dalm::nn::Tensor<float> b = random_tensor(n, n, 2);
    for (auto _ : state) {
        dalm::nn::Tape<float> t;
        auto out = t.matmul(t.input(a), t.input(b));
        benchmark::DoNotOptimize(t.val(out).v.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_tape_matmul)->Arg(32)->Arg(64)->Arg(128);

struct EncoderFixture {
    dalm::nn::ParamRegistry<float> reg;
    dalm::nn::EncoderParams<float> model;
    std::vector<int32_t> ids;
    std::vector<uint8_t> mask;

    explicit EncoderFixture(long seq) {
        dalm::nn::ModelConfig cfg;
        cfg.layers = 2;
        cfg.hidden_dim = 64;
        cfg.heads = 2;
        cfg.ffn_dim = 256;
        cfg.max_seq_len = static_cast<int>(seq);
        cfg.vocab_size = 512;
        model = dalm::nn::build_encoder(reg, cfg, 7);
        dalm::Rng rng(9, "bench-ids");
        for (long i = 0; i < seq; ++i)
            ids.push_back(static_cast<int32_t>(rng.uniform_int(5, cfg.vocab_size - 1)));
        mask.assign(ids.size(), 1);
    }
};

void BM_encoder_forward(benchmark::State& state) {
    EncoderFixture fx(state.range(0));
    for (auto _ : state) {
        dalm::nn::Tape<float> t;
        auto x = dalm::nn::embed_input(t, fx.model, fx.ids);
        auto h = dalm::nn::encoder_forward(t, fx.model, x, fx.mask);
        benchmark::DoNotOptimize(t.val(h).v.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_encoder_forward)->Arg(8)->Arg(32)->Arg(64);

void BM_encoder_forward_backward(benchmark::State& state) {
    EncoderFixture fx(state.range(0));
    std::vector<int32_t> labels(fx.ids.size(), 6);
    std::vector<uint8_t> loss_mask(fx.ids.size(), 1);
    for (auto _ : state) {
        fx.reg.zero_grads();
        dalm::nn::Tape<float> t;
        auto x = dalm::nn::embed_input(t, fx.model, fx.ids);
        auto h = dalm::nn::encoder_forward(t, fx.model, x, fx.mask);
        auto logits = dalm::nn::mlm_logits(t, fx.model, h);
        auto ce = t.masked_ce_sum(logits, labels, loss_mask);
        t.backward(ce.loss_sum);
        benchmark::DoNotOptimize(t.val(ce.loss_sum).v.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_encoder_forward_backward)->Arg(8)->Arg(32);

void BM_chunk_corpus(benchmark::State& state) {
    const std::vector<dalm::ParsedSentence> corpus =
        dalm::make_toy_corpus(static_cast<size_t>(state.range(0)), 11);
    for (auto _ : state) {
        const dalm::ChunkCorpusResult r = dalm::chunk_corpus(corpus);
        benchmark::DoNotOptimize(r.sentences);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_chunk_corpus)->Arg(96)->Arg(960);

void BM_tokenize(benchmark::State& state) {
    const std::vector<dalm::ParsedSentence> corpus = dalm::make_toy_corpus(96, 11);
    std::stringstream ss;
    for (const auto& s : corpus) ss << s.text() << "\n";
    const dalm::Vocabulary vocab = dalm::build_vocab(ss, 256);
    const std::string text = corpus[0].text();
    for (auto _ : state) {
        const dalm::TokenIdSequence seq = dalm::encode(vocab, text, 32, true);
        benchmark::DoNotOptimize(seq.ids.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_tokenize);

}  // namespace

BENCHMARK_MAIN();
