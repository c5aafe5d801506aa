// Acceptance gate. Each criterion is a standalone check with a pinned
// tolerance and a wall-clock budget; the binary prints exactly one
// [PASS]/[FAIL] line per criterion and exits nonzero if any selected
// criterion fails. Run with no arguments for the full gate, or pass
// criterion numbers to run a subset (e.g. "dalm_acceptance 4 6").

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dalm/chunker.hpp"
#include "dalm/conllu.hpp"
#include "dalm/errors.hpp"
#include "dalm/finetune.hpp"
#include "dalm/fusion.hpp"
#include "dalm/nn/encoder.hpp"
#include "dalm/nn/tape.hpp"
#include "dalm/pretrain.hpp"
#include "dalm/rng.hpp"
#include "dalm/schedule.hpp"
#include "dalm/synth.hpp"
#include "dalm/tokenizer.hpp"
#include "dalm/train.hpp"

#include "../helpers.hpp"
#include "../tree_oracle.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

dalm::Vocabulary vocab_from_sentences(const std::vector<dalm::ParsedSentence>& corpus,
                                      int max_size) {
    std::stringstream ss;
    for (const auto& s : corpus) ss << s.text() << "\n";
    return dalm::build_vocab(ss, max_size);
}

double median5(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// 1. The two worked example sentences produce exactly the six reference
//    chunks, byte for byte.

std::string criterion1(std::string& note) {
    struct Case {
        dalm::ParsedSentence s;
        std::vector<std::string> want;
    };
    const std::vector<Case> cases = {
        {testutil::davis_bar(), {"Davis had seen", "seen Mason", "in the bar"}},
        {testutil::davis_office(), {"Davis was", "at the office", "was very busy"}},
    };
    size_t total = 0;
    for (const Case& c : cases) {
        const dalm::ChildMap cm = dalm::children_index(c.s);
        const std::vector<dalm::AgreementChunk> got = dalm::chunk_sentence(c.s, cm);
        if (got.size() != c.want.size())
            return c.s.id + ": expected " + std::to_string(c.want.size()) + " chunks, got " +
                   std::to_string(got.size());
        for (size_t i = 0; i < got.size(); ++i)
            if (got[i].text != c.want[i])
                return c.s.id + " chunk " + std::to_string(i) + ": expected '" + c.want[i] +
                       "', got '" + got[i].text + "'";
        total += got.size();
    }
    if (total != 6) return "expected six chunks in total, got " + std::to_string(total);
    note = "6/6 chunk strings exact";
    return "";
}

// ---------------------------------------------------------------------------
// 2. extract_chunk agrees with the brute-force contiguous-subtree-run oracle
//    on 1,000 random trees of up to 10 tokens, under both contiguity modes.

std::string criterion2(std::string& note) {
    dalm::Rng rng(20260825, "acceptance-trees");
    long compared = 0;
    for (int i = 0; i < 1000; ++i) {
        const int n = static_cast<int>(rng.uniform_int(1, 10));
        const dalm::ParsedSentence s = testutil::random_tree(n, rng, "t" + std::to_string(i));
        const dalm::ChildMap cm = dalm::children_index(s);
        for (dalm::ContiguityMode mode :
             {dalm::ContiguityMode::Subtree, dalm::ContiguityMode::DirectChildren}) {
            const dalm::ChunkerOptions opts{mode};
            for (const dalm::ParsedToken& tok : s.tokens) {
                const auto a = dalm::agreement_for_deprel(tok.deprel);
                if (!a) continue;
                const auto got = dalm::extract_chunk(s, cm, tok.index, *a, opts);
                const auto want = testutil::oracle_chunk(s, tok.index, *a, mode);
                if (got.has_value() != want.has_value())
                    return s.id + " trigger " + std::to_string(tok.index) +
                           ": presence disagrees with the oracle";
                if (got && !testutil::same_chunk(*got, *want))
                    return s.id + " trigger " + std::to_string(tok.index) +
                           ": got [" + std::to_string(got->start) + "," +
                           std::to_string(got->end) + "] '" + got->text + "', oracle [" +
                           std::to_string(want->start) + "," + std::to_string(want->end) +
                           "] '" + want->text + "'";
                ++compared;
            }
        }
    }
    if (compared < 1000) return "too few triggers exercised: " + std::to_string(compared);
    note = std::to_string(compared) + " trigger extractions matched";
    return "";
}

// ---------------------------------------------------------------------------
// 3. length_stats matches a sort-and-index brute force on 100 random datasets
//    of size 1..500, at random percentiles plus the edges.

std::string criterion3(std::string& note) {
    dalm::Rng rng(31415, "acceptance-percentile");
    long checked = 0;
    for (int it = 0; it < 100; ++it) {
        const int n = static_cast<int>(rng.uniform_int(1, 500));
        dalm::ChunkDataset d;
        d.agreement = dalm::AgreementType::SV;
        std::vector<int> lengths;
        for (int i = 0; i < n; ++i) {
            const int len = static_cast<int>(rng.uniform_int(1, 40));
            dalm::AgreementChunk c;
            c.agreement = d.agreement;
            c.sentence_id = "p" + std::to_string(it) + "-" + std::to_string(i);
            c.trigger_index = 1;
            c.start = 1;
            c.end = len;
            c.text = "x";
            d.chunks.push_back(std::move(c));
            lengths.push_back(len);
        }
        std::sort(lengths.begin(), lengths.end());
        std::vector<double> percentiles = {0.01, 50.0, 100.0};
        for (int k = 0; k < 5; ++k)
            percentiles.push_back(static_cast<double>(rng.uniform_int(1, 10000)) / 100.0);
        for (double p : percentiles) {
            // Independent brute force: smallest 1-based rank k with k*100 >= p*n.
            int want = lengths.back();
            for (int k = 1; k <= n; ++k) {
                if (static_cast<double>(k) * 100.0 >= p * static_cast<double>(n)) {
                    want = lengths[static_cast<size_t>(k - 1)];
                    break;
                }
            }
            const int got = dalm::length_stats(d, p);
            if (got != want)
                return fmt("n=%.0f p=%.4f: got %.0f", static_cast<double>(n), p,
                           static_cast<double>(got)) +
                       ", oracle " + std::to_string(want);
            ++checked;
        }
    }
    note = std::to_string(checked) + " percentile queries exact";
    return "";
}

// ---------------------------------------------------------------------------
// 4. Every parameter gradient of a 2-layer model matches central finite
//    differences (eps = 1e-3) in 64-bit mode, max relative error < 1e-3.

std::string criterion4(std::string& note) {
    using T = double;
    dalm::nn::ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden_dim = 16;
    cfg.heads = 2;
    cfg.ffn_dim = 48;
    cfg.max_seq_len = 8;
    cfg.vocab_size = 13;
    dalm::nn::ParamRegistry<T> reg;
    dalm::nn::EncoderParams<T> model = dalm::nn::build_encoder<T>(reg, cfg, 41);

    const std::vector<int32_t> ids = {4, 6, 7, 9, 11};
    const std::vector<int32_t> labels = {5, 0, 8, 12, 3};
    const std::vector<uint8_t> loss_mask = {1, 0, 1, 1, 0};
    const std::vector<uint8_t> attn_mask(ids.size(), 1);

    const auto loss_of = [&]() -> double {
        dalm::nn::Tape<T> t;
        auto x = dalm::nn::embed_input(t, model, ids);
        auto h = dalm::nn::encoder_forward(t, model, x, attn_mask);
        auto logits = dalm::nn::mlm_logits(t, model, h);
        auto ce = t.masked_ce_sum(logits, labels, loss_mask);
        return static_cast<double>(t.val(ce.loss_sum).v[0]);
    };

    reg.zero_grads();
    {
        dalm::nn::Tape<T> t;
        auto x = dalm::nn::embed_input(t, model, ids);
        auto h = dalm::nn::encoder_forward(t, model, x, attn_mask);
        auto logits = dalm::nn::mlm_logits(t, model, h);
        auto ce = t.masked_ce_sum(logits, labels, loss_mask);
        t.backward(ce.loss_sum);
    }

    const double eps = 1e-3;
    double max_rel = 0.0;
    std::string worst = "-";
    long elements = 0;
    for (auto& up : reg) {
        dalm::nn::Parameter<T>& p = *up;
        for (size_t i = 0; i < p.value.v.size(); ++i) {
            const T keep = p.value.v[i];
            p.value.v[i] = keep + eps;
            const double fp = loss_of();
            p.value.v[i] = keep - eps;
            const double fm = loss_of();
            p.value.v[i] = keep;
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = static_cast<double>(p.grad.v[i]);
            const double rel =
                std::abs(an - fd) / std::max({1e-8, std::abs(an), std::abs(fd)});
            if (rel > max_rel) {
                max_rel = rel;
                worst = p.name + "[" + std::to_string(i) + "]";
            }
            ++elements;
        }
    }
    if (!(max_rel < 1e-3))
        return fmt("max relative error %.3e (tolerance 1e-3) at ", max_rel) + worst;
    note = fmt("%.0f elements, max relative error %.3e", static_cast<double>(elements), max_rel);
    return "";
}

// ---------------------------------------------------------------------------
// 5. Architectural invariants: no bias vectors on linear maps anywhere in a
//    full stage-2 registry, the position table's row zero is exactly
//    (0, sigma) interleaved, and layer norm re-centers and re-scales.

std::string criterion5(std::string& note) {
    // (a) Bias-free registry across submodels, fusion block, and main encoder.
    dalm::nn::ModelConfig sub;
    sub.layers = 1;
    sub.hidden_dim = 16;
    sub.heads = 2;
    sub.ffn_dim = 32;
    sub.max_seq_len = 8;
    sub.vocab_size = 11;
    dalm::nn::ModelConfig main_cfg = sub;
    main_cfg.layers = 2;
    main_cfg.max_seq_len = 12;
    dalm::Stage2Model m = dalm::build_stage2({sub, sub, sub, sub}, main_cfg, 7);
    for (const auto& up : *m.reg)
        if (up->kind == dalm::nn::ParamKind::LinearBias)
            return "registry holds a linear bias: " + up->name;
    bool threw = false;
    try {
        m.reg->add("probe.bias", dalm::nn::ParamKind::LinearBias, {16});
    } catch (const std::logic_error&) {
        threw = true;
    }
    if (!threw) return "registry accepted a linear bias parameter";

    // (b) Sinusoidal row zero: sin terms exactly 0, cos terms exactly sigma.
    const long dim = 16;
    const dalm::nn::Tensor<float> pos = dalm::nn::sinusoidal_positions<float>(4, dim);
    const float sigma = 1.0f / std::sqrt(static_cast<float>(dim));
    for (long i = 0; i < dim / 2; ++i) {
        if (pos.at(0, 2 * i) != 0.0f)
            return "position row 0 even column " + std::to_string(2 * i) + " is not exactly 0";
        if (pos.at(0, 2 * i + 1) != sigma)
            return "position row 0 odd column " + std::to_string(2 * i + 1) +
                   " is not exactly sigma";
    }

    // (c) Layer norm output moments per position.
    dalm::nn::ParamRegistry<float> reg;
    auto& gain = reg.add("g", dalm::nn::ParamKind::NormGain, {16});
    auto& offset = reg.add("b", dalm::nn::ParamKind::NormOffset, {16});
    dalm::nn::init_const(gain, 1.0f);
    dalm::nn::init_const(offset, 0.0f);
    dalm::Rng rng(99, "ln-probe");
    dalm::nn::Tensor<float> x({6, 16});
    for (float& v : x.v) v = static_cast<float>(rng.normal(0.4, 2.5));
    dalm::nn::Tape<float> t;
    auto y = t.layer_norm(t.input(std::move(x)), t.param(gain), t.param(offset),
                          static_cast<float>(dalm::nn::kLayerNormEps));
    const dalm::nn::Tensor<float>& ty = t.val(y);
    for (long r = 0; r < ty.rows(); ++r) {
        double mean = 0.0;
        for (long c = 0; c < ty.cols(); ++c) mean += ty.at(r, c);
        mean /= static_cast<double>(ty.cols());
        double var = 0.0;
        for (long c = 0; c < ty.cols(); ++c) {
            const double d = ty.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(ty.cols());
        if (!(std::abs(mean) < 1e-5))
            return fmt("row %.0f normalized mean %.3e exceeds 1e-5", static_cast<double>(r), mean);
        if (!(std::abs(var - 1.0) < 1e-3))
            return fmt("row %.0f normalized variance %.6f is not within 1e-3 of 1",
                       static_cast<double>(r), var);
    }
    note = "registry bias-free; sinusoid row 0 exact; layer-norm moments in bounds";
    return "";
}

// ---------------------------------------------------------------------------
// 6. Triangular schedule endpoints are exact: 0 at step 0, the peak value at
//    the peak step, 0 at the final step.

std::string criterion6(std::string& note) {
    const double peak = 25e-5;
    const double at0 = dalm::triangular_lr(0, 1000, peak, 0.5);
    const double atp = dalm::triangular_lr(500, 1000, peak, 0.5);
    const double atT = dalm::triangular_lr(1000, 1000, peak, 0.5);
    if (at0 != 0.0) return fmt("lr(0) = %.17g, expected exactly 0", at0);
    if (atp != peak) return fmt("lr(peak) = %.17g, expected exactly %.17g", atp, peak);
    if (atT != 0.0) return fmt("lr(total) = %.17g, expected exactly 0", atT);
    note = "0 / 25e-5 / 0 exact";
    return "";
}

// ---------------------------------------------------------------------------
// 7. Each of the four stage-1 submodels reaches > 0.9 masked-token training
//    accuracy within 300 steps on a 32-chunk dataset (hidden width 64).

std::string criterion7(std::string& note) {
    const std::array<std::string, 4> prefix = {"sv", "dobj", "pobj", "comp"};
    std::array<dalm::ChunkDataset, 4> data;
    std::vector<std::string> words;
    for (size_t a = 0; a < 4; ++a) {
        data[a].agreement = dalm::kAllAgreements[a];
        for (int i = 0; i < 32; ++i) {
            const std::string w1 = prefix[a] + "q" + std::to_string(i);
            const std::string w2 = prefix[a] + "r" + std::to_string(i);
            const std::string w3 = prefix[a] + "s" + std::to_string(i);
            dalm::AgreementChunk c;
            c.agreement = data[a].agreement;
            c.sentence_id = "acc7-" + prefix[a] + "-" + std::to_string(i);
            c.trigger_index = 1;
            c.start = 1;
            c.end = 3;
            c.text = w1 + " " + w2 + " " + w3;
            data[a].chunks.push_back(std::move(c));
            words.insert(words.end(), {w1, w2, w3});
        }
    }
    const dalm::Vocabulary vocab = dalm::build_vocab_from_words(words, 600);

    std::string accs;
    for (size_t a = 0; a < 4; ++a) {
        dalm::Stage1Config cfg;
        cfg.model.layers = dalm::kSubmodelLayers;
        cfg.model.hidden_dim = 64;
        cfg.model.heads = 2;
        cfg.model.ffn_dim = 256;
        cfg.model.max_seq_len = 8;
        cfg.model.vocab_size = vocab.size();
        cfg.total_steps = 300;
        cfg.micro_batch = 8;
        cfg.accumulation_target = 32;
        cfg.peak_lr = 3e-3;
        cfg.seed = 900 + a;
        cfg.threads = 4;
        dalm::nn::ParamRegistry<float> reg;
        dalm::nn::EncoderParams<float> model = dalm::nn::build_encoder(reg, cfg.model, cfg.seed);
        const dalm::Stage1Result r = dalm::train_stage1(data[a], vocab, cfg, reg, model);
        if (r.train.aborted) return prefix[a] + ": training aborted: " + r.train.abort_reason;
        accs += (a ? " " : "") + prefix[a] + "=" + fmt("%.3f", r.train.final_acc);
        if (!(r.train.final_acc > 0.9))
            return prefix[a] + fmt(": final train accuracy %.4f <= 0.9 after 300 steps",
                                   r.train.final_acc);
    }
    note = accs;
    return "";
}

// ---------------------------------------------------------------------------
// 8. Pinning every agreement score to zero matches a structurally
//    fusion-free run: loss traces agree within 1e-6 over 50 steps.

std::string criterion8(std::string& note) {
    const std::vector<dalm::ParsedSentence> corpus = dalm::make_toy_corpus(12, 2027);
    const dalm::Vocabulary vocab = vocab_from_sentences(corpus, 160);

    dalm::nn::ModelConfig sub;
    sub.layers = 1;
    sub.hidden_dim = 16;
    sub.heads = 2;
    sub.ffn_dim = 32;
    sub.max_seq_len = 12;
    sub.vocab_size = vocab.size();
    dalm::nn::ModelConfig main_cfg = sub;
    main_cfg.max_seq_len = 16;

    const auto run = [&](bool clamp, bool nofuse) {
        dalm::Stage2Model m = dalm::build_stage2({sub, sub, sub, sub}, main_cfg, 404);
        dalm::Stage2Config cfg;
        cfg.main_model = main_cfg;
        cfg.total_steps = 50;
        cfg.micro_batch = 2;
        cfg.accumulation_target = 4;
        cfg.peak_lr = 1e-3;
        cfg.seed = 606;
        cfg.threads = 1;
        cfg.clamp_scores = clamp;
        cfg.no_fusion = nofuse;
        return dalm::train_stage2(corpus, vocab, cfg, m);
    };
    const dalm::Stage2Result clamped = run(true, false);
    const dalm::Stage2Result absent = run(false, true);
    if (clamped.train.aborted || absent.train.aborted) return "a run aborted";
    if (clamped.train.trace.size() != 50 || absent.train.trace.size() != 50)
        return "expected 50 trace rows per run";
    double max_diff = 0.0;
    for (size_t i = 0; i < 50; ++i) {
        const double d =
            std::abs(clamped.train.trace[i].loss - absent.train.trace[i].loss);
        max_diff = std::max(max_diff, d);
        if (!(d <= 1e-6))
            return fmt("step %.0f: |loss difference| %.3e > 1e-6", static_cast<double>(i + 1), d);
    }
    note = fmt("max |loss difference| %.3e over 50 steps", max_diff);
    return "";
}

// ---------------------------------------------------------------------------
// 9. The fused stage-2 model reaches > 0.9 masked-token training accuracy on
//    a 32-sentence toy corpus within 500 steps (hidden 64, 2-layer body).

std::string criterion9(std::string& note) {
    const std::vector<dalm::ParsedSentence> corpus = dalm::make_toy_corpus(32, 59);
    const dalm::Vocabulary vocab = vocab_from_sentences(corpus, 160);

    dalm::nn::ModelConfig sub;
    sub.layers = dalm::kSubmodelLayers;
    sub.hidden_dim = 64;
    sub.heads = 2;
    sub.ffn_dim = 256;
    sub.max_seq_len = 10;
    sub.vocab_size = vocab.size();
    dalm::nn::ModelConfig main_cfg = sub;
    main_cfg.layers = 2;
    main_cfg.max_seq_len = 12;

    dalm::Stage2Model m = dalm::build_stage2({sub, sub, sub, sub}, main_cfg, 9090);
    dalm::Stage2Config cfg;
    cfg.main_model = main_cfg;
    cfg.total_steps = 500;
    cfg.micro_batch = 8;
    cfg.accumulation_target = 32;
    cfg.peak_lr = 1.5e-3;
    cfg.seed = 9191;
    cfg.threads = 4;
    const dalm::Stage2Result r = dalm::train_stage2(corpus, vocab, cfg, m);
    if (r.train.aborted) return "training aborted: " + r.train.abort_reason;
    if (!(r.train.final_acc > 0.9))
        return fmt("final train accuracy %.4f <= 0.9 after 500 steps", r.train.final_acc);
    note = fmt("final train accuracy %.3f (%.0f sequences)", r.train.final_acc,
               static_cast<double>(r.sequences));
    return "";
}

// ---------------------------------------------------------------------------
// 10. On a 512-sentence corpus whose masked tokens are recoverable from chunk
//     context, the median final MLM train accuracy over five seeds with
//     fusion is at least the no-fusion median.

std::string criterion10(std::string& note) {
    const std::vector<dalm::ParsedSentence> corpus = dalm::make_triple_corpus(512, 3001);
    const dalm::Vocabulary vocab = vocab_from_sentences(corpus, 160);

    dalm::nn::ModelConfig sub;
    sub.layers = 1;
    sub.hidden_dim = 32;
    sub.heads = 2;
    sub.ffn_dim = 64;
    sub.max_seq_len = 6;
    sub.vocab_size = vocab.size();
    dalm::nn::ModelConfig main_cfg = sub;
    main_cfg.layers = 2;
    main_cfg.max_seq_len = 8;

    std::vector<double> with_fusion, without_fusion;
    for (int i = 0; i < 5; ++i) {
        for (bool nofuse : {false, true}) {
            dalm::Stage2Model m =
                dalm::build_stage2({sub, sub, sub, sub}, main_cfg, 7000 + i);
            dalm::Stage2Config cfg;
            cfg.main_model = main_cfg;
            cfg.total_steps = 120;
            cfg.micro_batch = 8;
            cfg.accumulation_target = 32;
            cfg.peak_lr = 1.5e-3;
            cfg.seed = 7100 + i;
            cfg.threads = 4;
            cfg.no_fusion = nofuse;
            const dalm::Stage2Result r = dalm::train_stage2(corpus, vocab, cfg, m);
            if (r.train.aborted)
                return fmt("seed %.0f aborted: ", static_cast<double>(i)) + r.train.abort_reason;
            (nofuse ? without_fusion : with_fusion).push_back(r.train.final_acc);
        }
    }
    const double med_fused = median5(with_fusion);
    const double med_plain = median5(without_fusion);
    if (!(med_fused >= med_plain))
        return fmt("median accuracy with fusion %.4f < without %.4f", med_fused, med_plain);
    note = fmt("median accuracy: fusion %.3f vs no-fusion %.3f", med_fused, med_plain);
    return "";
}

// ---------------------------------------------------------------------------
// 11. On the subject-identity task, removing the sv submodel causes the
//     largest accuracy drop among the four ablations in at least 4 of 5 seeds.

std::string criterion11(std::string& note) {
    int successes = 0;
    std::string per_seed;
    for (int s = 1; s <= 5; ++s) {
        const std::vector<dalm::ParsedSentence> corpus = dalm::make_toy_corpus(96, 4000 + s);
        const dalm::Vocabulary vocab = vocab_from_sentences(corpus, 200);

        dalm::nn::ModelConfig sub;
        sub.layers = 1;
        sub.hidden_dim = 32;
        sub.heads = 2;
        sub.ffn_dim = 64;
        sub.max_seq_len = 10;
        sub.vocab_size = vocab.size();
        dalm::nn::ModelConfig main_cfg = sub;
        main_cfg.layers = 2;
        main_cfg.max_seq_len = 16;

        dalm::Stage2Model m = dalm::build_stage2({sub, sub, sub, sub}, main_cfg, 8000 + s);
        dalm::Stage2Config pre;
        pre.main_model = main_cfg;
        pre.total_steps = 100;
        pre.micro_batch = 8;
        pre.accumulation_target = 16;
        pre.peak_lr = 1.5e-3;
        pre.seed = 8100 + s;
        pre.threads = 4;
        const dalm::Stage2Result pr = dalm::train_stage2(corpus, vocab, pre, m);
        if (pr.train.aborted)
            return fmt("seed %.0f: pretraining aborted: ", static_cast<double>(s)) +
                   pr.train.abort_reason;

        const dalm::ToyTask task = dalm::make_subject_task(64, 64, 9000 + s);
        const auto train =
            dalm::prepare_examples(task.train, &task.train_parses, nullptr, vocab, m);
        const auto dev = dalm::prepare_examples(task.dev, &task.dev_parses, nullptr, vocab, m);

        std::vector<std::vector<float>> snap;
        for (const auto& up : *m.reg) snap.push_back(up->value.v);
        const auto restore = [&]() {
            for (size_t k = 0; k < snap.size(); ++k) (*m.reg)[k].value.v = snap[k];
        };

        dalm::FinetuneConfig fc;
        fc.epochs = 3;
        fc.batch_size = 8;
        fc.lr = 1e-3;
        fc.seed = 9500 + s;
        fc.threads = 4;
        fc.num_classes = task.num_classes;
        const auto run_arm = [&](int ablate) {
            restore();
            fc.ablate = ablate;
            const dalm::FinetuneResult r = dalm::finetune(m, train, dev, fc);
            return r.best_dev_acc;
        };

        const double baseline = run_arm(-1);
        std::array<double, 4> drop{};
        for (int a = 0; a < 4; ++a) drop[static_cast<size_t>(a)] = baseline - run_arm(a);
        const bool sv_largest = drop[0] > drop[1] && drop[0] > drop[2] && drop[0] > drop[3];
        successes += sv_largest;
        per_seed += fmt(" s%.0f", static_cast<double>(s)) +
                    (sv_largest ? "+" : "-") +
                    fmt("(base %.2f, sv %.2f dobj %.2f", baseline, drop[0], drop[1]) +
                    fmt(" pobj %.2f comp %.2f)", drop[2], drop[3]);
    }
    if (successes < 4)
        return "sv ablation was the largest drop in only " + std::to_string(successes) +
               "/5 seeds:" + per_seed;
    note = std::to_string(successes) + "/5 seeds:" + per_seed;
    return "";
}

// ---------------------------------------------------------------------------
// 12. Seeded CLI runs are byte-identical with --threads 1: the trace and
//     metric CSVs of repeated stage-1, stage-2, and eval runs match exactly.

std::string criterion12(std::string& note) {
    const std::string cli = DALM_CLI_PATH;
    testutil::TempDir tmp;
    const fs::path root = tmp.path();
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };

    {
        std::ofstream out(root / "corpus.conllu");
        dalm::serialize_conllu(dalm::make_toy_corpus(24, 5), out);
    }
    auto run = [&](const std::string& args) {
        return testutil::run_cmd("\"" + cli + "\" " + args);
    };
    auto r = run("chunk --in " + q(root / "corpus.conllu") + " --out-dir " + q(root / "chunks"));
    if (r.exit_code != 0) return "chunk failed: " + r.output;
    r = run("build-vocab --in " + q(root / "corpus.conllu") + " --size 192 --out " +
            q(root / "vocab.txt"));
    if (r.exit_code != 0) return "build-vocab failed: " + r.output;

    const std::string s1_flags =
        " --agreement sv --data " + q(root / "chunks" / "sv.jsonl") + " --vocab " +
        q(root / "vocab.txt") +
        " --steps 4 --micro-batch 2 --accum 4 --hidden 16 --heads 2 --max-len 12"
        " --seed 11 --threads 1";
    for (const char* arm : {"a", "b"}) {
        const fs::path dir = root / ("s1-" + std::string(arm));
        r = run("pretrain-stage1" + s1_flags + " --out " + q(dir / "sv.ckpt"));
        if (r.exit_code != 0) return "pretrain-stage1 failed: " + r.output;
    }
    if (testutil::slurp((root / "s1-a" / "sv.ckpt.trace.csv").string()) !=
        testutil::slurp((root / "s1-b" / "sv.ckpt.trace.csv").string()))
        return "stage-1 trace CSVs differ between identical runs";
    if (testutil::slurp((root / "s1-a" / "sv.ckpt").string()) !=
        testutil::slurp((root / "s1-b" / "sv.ckpt").string()))
        return "stage-1 checkpoints differ between identical runs";

    for (const char* name : {"sv", "dobj", "pobj", "comp"}) {
        r = run("pretrain-stage1 --agreement " + std::string(name) + " --data " +
                q(root / "chunks" / (std::string(name) + ".jsonl")) + " --vocab " +
                q(root / "vocab.txt") +
                " --steps 2 --micro-batch 2 --accum 2 --hidden 16 --heads 2 --max-len 10"
                " --seed 21 --threads 1 --out " +
                q(root / "subs" / (std::string(name) + ".ckpt")));
        if (r.exit_code != 0) return std::string(name) + " submodel build failed: " + r.output;
    }
    const std::string s2_flags = " --corpus " + q(root / "corpus.conllu") + " --submodels " +
                                 q(root / "subs") + " --vocab " + q(root / "vocab.txt") +
                                 " --steps 3 --micro-batch 2 --accum 4 --layers 1 --heads 2"
                                 " --max-len 12 --seed 77 --threads 1";
    for (const char* arm : {"a", "b"}) {
        const fs::path dir = root / ("s2-" + std::string(arm));
        r = run("pretrain-stage2" + s2_flags + " --out " + q(dir / "model.ckpt"));
        if (r.exit_code != 0) return "pretrain-stage2 failed: " + r.output;
    }
    if (testutil::slurp((root / "s2-a" / "model.ckpt.trace.csv").string()) !=
        testutil::slurp((root / "s2-b" / "model.ckpt.trace.csv").string()))
        return "stage-2 trace CSVs differ between identical runs";

    const std::string ev_flags = " --checkpoint " + q(root / "s1-a" / "sv.ckpt") + " --data " +
                                 q(root / "chunks" / "sv.jsonl") + " --vocab " +
                                 q(root / "vocab.txt") + " --mask-rate 0.15 --seed 3";
    for (const char* arm : {"a", "b"}) {
        const fs::path dir = root / ("ev-" + std::string(arm));
        r = run("eval" + ev_flags + " --out " + q(dir / "metrics.csv"));
        if (r.exit_code != 0) return "eval failed: " + r.output;
    }
    const std::string ma = testutil::slurp((root / "ev-a" / "metrics.csv").string());
    if (ma != testutil::slurp((root / "ev-b" / "metrics.csv").string()))
        return "eval metric CSVs differ between identical runs";
    if (ma.rfind("metric,value", 0) != 0) return "metrics CSV missing its header";
    note = "stage-1, stage-2, and eval outputs byte-identical";
    return "";
}

// ---------------------------------------------------------------------------
// 13. End-to-end smoke test: the full toy pipeline chained through the CLI on
//     the bundled corpus exits 0 at every step with a manifest per step.

std::string criterion13(std::string& note) {
    const std::string cli = DALM_CLI_PATH;
    const fs::path toy = fs::path(DALM_TOY_DIR);
    testutil::TempDir tmp;
    const fs::path root = tmp.path();
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };

    std::vector<fs::path> manifest_dirs;
    int steps_run = 0;
    const auto step = [&](const std::string& args, const fs::path& manifest_dir,
                          std::string* output = nullptr) -> std::string {
        const testutil::RunResult r = testutil::run_cmd("\"" + cli + "\" " + args);
        ++steps_run;
        if (r.exit_code != 0)
            return "step " + std::to_string(steps_run) + " (" +
                   args.substr(0, args.find(' ')) + ") exited " +
                   std::to_string(r.exit_code) + ": " + r.output;
        if (!fs::exists(manifest_dir / "manifest.json"))
            return "step " + std::to_string(steps_run) + ": no manifest in " +
                   manifest_dir.string();
        manifest_dirs.push_back(manifest_dir);
        if (output) *output = r.output;
        return "";
    };

    std::string err;
    err = step("ingest --in " + q(toy / "corpus.conllu") + " --out " +
                   q(root / "ingest" / "corpus.conllu"),
               root / "ingest");
    if (!err.empty()) return err;
    const fs::path corpus = root / "ingest" / "corpus.conllu";

    err = step("chunk --in " + q(corpus) + " --out-dir " + q(root / "chunks"), root / "chunks");
    if (!err.empty()) return err;

    err = step("stats --in " + q(root / "chunks" / "sv.jsonl") + " --in " +
                   q(root / "chunks" / "dobj.jsonl") + " --in " +
                   q(root / "chunks" / "pobj.jsonl") + " --in " +
                   q(root / "chunks" / "comp.jsonl") + " --percentile 95 --out " +
                   q(root / "stats" / "lengths.csv"),
               root / "stats");
    if (!err.empty()) return err;

    err = step("build-vocab --in " + q(corpus) + " --size 384 --out " +
                   q(root / "vocab" / "vocab.txt"),
               root / "vocab");
    if (!err.empty()) return err;
    const fs::path vocab = root / "vocab" / "vocab.txt";

    const std::array<std::string, 4> names = {"sv", "dobj", "pobj", "comp"};
    for (size_t a = 0; a < 4; ++a) {
        err = step("pretrain-stage1 --agreement " + names[a] + " --data " +
                       q(root / "chunks" / (names[a] + ".jsonl")) + " --vocab " + q(vocab) +
                       " --out " + q(root / "subs" / (names[a] + ".ckpt")) +
                       " --steps 150 --micro-batch 8 --accum 16 --hidden 64 --heads 2"
                       " --seed " +
                       std::to_string(21 + a) + " --threads 4",
                   root / "subs");
        if (!err.empty()) return err;
    }

    err = step("pretrain-stage2 --corpus " + q(corpus) + " --submodels " + q(root / "subs") +
                   " --vocab " + q(vocab) + " --out " + q(root / "stage2" / "model.ckpt") +
                   " --steps 200 --micro-batch 8 --accum 16 --layers 2 --heads 2"
                   " --max-len 16 --seed 33 --threads 4",
               root / "stage2");
    if (!err.empty()) return err;
    const fs::path stage2 = root / "stage2" / "model.ckpt";

    err = step("attn-dump --checkpoint " + q(stage2) + " --vocab " + q(vocab) +
                   " --sentence-file " + q(corpus) + " --index 0 --out " +
                   q(root / "attn" / "report.html"),
               root / "attn");
    if (!err.empty()) return err;
    if (!fs::exists(root / "attn" / "report.csv")) return "attn-dump wrote no CSV";

    err = step("eval --checkpoint " + q(stage2) + " --corpus " + q(corpus) + " --vocab " +
                   q(vocab) + " --seed 9 --out " + q(root / "eval-mlm" / "metrics.csv"),
               root / "eval-mlm");
    if (!err.empty()) return err;

    const std::string task_flags =
        " --vocab " + q(vocab) + " --train " + q(toy / "subject.train.tsv") + " --dev " +
        q(toy / "subject.dev.tsv") + " --train-parses-a " + q(toy / "subject.train.conllu") +
        " --dev-parses-a " + q(toy / "subject.dev.conllu") +
        " --classes 2 --epochs 2 --batch-size 8 --lr 1e-3 --seed 44 --threads 4";
    std::string ft_out;
    err = step("finetune --checkpoint " + q(stage2) + task_flags + " --out " +
                   q(root / "ft" / "model.ckpt"),
               root / "ft", &ft_out);
    if (!err.empty()) return err;
    if (ft_out.find("best_dev_acc=") == std::string::npos)
        return "finetune reported no best_dev_acc";

    err = step("eval --checkpoint " + q(root / "ft" / "model.ckpt") + " --eval " +
                   q(toy / "subject.dev.tsv") + " --parses-a " + q(toy / "subject.dev.conllu") +
                   " --vocab " + q(vocab) + " --out " + q(root / "eval-cls" / "metrics.csv"),
               root / "eval-cls");
    if (!err.empty()) return err;

    err = step("ablate --checkpoint " + q(stage2) + task_flags + " --out " +
                   q(root / "ablate" / "ablation.csv"),
               root / "ablate");
    if (!err.empty()) return err;
    const std::string ab = testutil::slurp((root / "ablate" / "ablation.csv").string());
    if (ab.rfind("removed,baseline_acc,ablated_acc,remaining_pct", 0) != 0)
        return "ablation CSV missing its header";

    for (const fs::path& dir : manifest_dirs)
        if (!fs::exists(dir / "manifest.json")) return "manifest vanished from " + dir.string();
    note = std::to_string(steps_run) + " pipeline steps, " +
           std::to_string(manifest_dirs.size()) + " manifests";
    return "";
}

struct Criterion {
    int num;
    const char* title;
    double budget_s;
    std::function<std::string(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "worked-example chunks match the reference strings", 1.0, criterion1},
        {2, "chunker agrees with the brute-force subtree oracle", 10.0, criterion2},
        {3, "length percentiles match the sort-and-index oracle", 5.0, criterion3},
        {4, "analytic gradients match central finite differences", 120.0, criterion4},
        {5, "bias-free registry, exact sinusoid row zero, layer-norm moments", 10.0, criterion5},
        {6, "triangular schedule endpoints are exact", 5.0, criterion6},
        {7, "every stage-1 submodel overfits a 32-chunk dataset", 300.0, criterion7},
        {8, "clamped scores match the fusion-free graph", 120.0, criterion8},
        {9, "the fused model overfits a 32-sentence corpus", 600.0, criterion9},
        {10, "fusion at least matches the no-fusion baseline", 600.0, criterion10},
        {11, "removing the sv submodel hurts the subject task most", 900.0, criterion11},
        {12, "seeded CLI runs are byte-identical", 120.0, criterion12},
        {13, "the toy pipeline runs end to end", 1800.0, criterion13},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        char* end = nullptr;
        const long n = std::strtol(argv[i], &end, 10);
        if (end == argv[i] || *end != '\0' || n < 1 || n > static_cast<long>(all.size())) {
            std::fprintf(stderr, "usage: %s [criterion numbers 1..%zu]\n", argv[0], all.size());
            return 1;
        }
        selected.insert(static_cast<int>(n));
    }

    bool all_pass = true;
    for (const Criterion& c : all) {
        if (!selected.empty() && !selected.count(c.num)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        std::string note;
        std::string failure;
        try {
            failure = c.run(note);
        } catch (const std::exception& e) {
            failure = std::string("unexpected exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (failure.empty() && secs > c.budget_s)
            failure = fmt("over the %.0fs budget", c.budget_s);
        const std::string extra = failure.empty() ? note : failure;
        std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n", failure.empty() ? "PASS" : "FAIL",
                    c.num, c.title, secs, extra.empty() ? "" : " -- ", extra.c_str());
        std::fflush(stdout);
        all_pass = all_pass && failure.empty();
    }
    return all_pass ? 0 : 1;
}
