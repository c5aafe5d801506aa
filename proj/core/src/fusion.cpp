#include "dalm/fusion.hpp"

#include <nlohmann/json.hpp>

#include "dalm/checkpoint.hpp"
#include "dalm/errors.hpp"
#include "dalm/version.hpp"

namespace dalm {

void Stage2Config::validate() const {
    main_model.validate();
    if (!(mask_rate > 0.0 && mask_rate < 1.0))
        throw DataError("stage2: mask_rate must be in (0,1)");
    if (clamp_scores && no_fusion)
        throw DataError("stage2: clamp_scores and no_fusion are mutually exclusive");
    loop().validate();
}

TrainLoopConfig Stage2Config::loop() const {
    TrainLoopConfig lc;
    lc.total_steps = total_steps;
    lc.micro_batch = micro_batch;
    lc.accumulation_target = accumulation_target;
    lc.peak_lr = peak_lr;
    lc.peak_fraction = peak_fraction;
    lc.seed = seed;
    lc.threads = threads;
    lc.adamw = adamw;
    return lc;
}

Stage2Model build_stage2(const std::array<nn::ModelConfig, 4>& sub_cfgs,
                         const nn::ModelConfig& main_cfg, uint64_t seed) {
    main_cfg.validate();
    for (AgreementType a : kAllAgreements) {
        const nn::ModelConfig& sc = sub_cfgs[static_cast<size_t>(a)];
        sc.validate();
        if (sc.hidden_dim != main_cfg.hidden_dim)
            throw DataError(std::string("stage2: submodel '") + agreement_name(a) +
                            "' hidden_dim differs from the main model");
        if (sc.vocab_size != main_cfg.vocab_size)
            throw DataError(std::string("stage2: submodel '") + agreement_name(a) +
                            "' vocab_size differs from the main model");
    }

    Stage2Model m;
    m.reg = std::make_shared<nn::ParamRegistry<float>>();
    for (AgreementType a : kAllAgreements) {
        const std::string prefix = std::string("sub.") + agreement_name(a) + ".";
        m.subs[static_cast<size_t>(a)] =
            nn::build_encoder(*m.reg, sub_cfgs[static_cast<size_t>(a)], seed, prefix);
    }
    for (AgreementType a : kAllAgreements) {
        auto& s = m.reg->add(std::string("score.") + agreement_name(a), nn::ParamKind::Scalar, {1});
        nn::init_const(s, 1.0f);
        m.scores[static_cast<size_t>(a)] = &s;
    }
    m.fusion_gain = &m.reg->add("fusion.gain", nn::ParamKind::NormGain, {main_cfg.hidden_dim});
    m.fusion_offset =
        &m.reg->add("fusion.offset", nn::ParamKind::NormOffset, {main_cfg.hidden_dim});
    nn::init_const(*m.fusion_gain, 1.0f);
    nn::init_const(*m.fusion_offset, 0.0f);
    m.main = nn::build_encoder(*m.reg, main_cfg, seed, "main.");
    return m;
}

void load_submodel_weights(Stage2Model& m, AgreementType a, const Stage1Checkpoint& ckpt) {
    if (ckpt.agreement != a)
        throw DataError(std::string("stage2: checkpoint is for '") +
                        agreement_name(ckpt.agreement) + "', expected '" + agreement_name(a) +
                        "'");
    const nn::ModelConfig& want = m.subs[static_cast<size_t>(a)].cfg;
    const nn::ModelConfig& got = ckpt.model;
    if (got.layers != want.layers || got.hidden_dim != want.hidden_dim ||
        got.heads != want.heads || got.ffn_dim != want.ffn_dim ||
        got.max_seq_len != want.max_seq_len || got.vocab_size != want.vocab_size)
        throw DataError(std::string("stage2: architecture mismatch for submodel '") +
                        agreement_name(a) + "'");

    const std::string prefix = std::string("sub.") + agreement_name(a) + ".";
    for (const auto& src : *ckpt.reg) {
        nn::Parameter<float>* dst = m.reg->find(prefix + src->name);
        if (!dst)
            throw DataError("stage2: no destination for parameter '" + prefix + src->name + "'");
        if (dst->value.shape != src->value.shape)
            throw DataError("stage2: shape mismatch for '" + prefix + src->name + "'");
        dst->value.v = src->value.v;
    }
}

PreparedChunk align_chunk(const AgreementChunk& c, const TokenIdSequence& sentence_enc,
                          const Vocabulary& vocab, int sub_max_len,
                          const std::string& sentence_id) {
    PreparedChunk pc;
    pc.agreement = c.agreement;
    TokenIdSequence enc = encode(vocab, c.text, sub_max_len, true);
    pc.ids = enc.ids;

    const size_t chunk_words = enc.word_spans.size();
    if (chunk_words != static_cast<size_t>(c.word_length()))
        throw DataError("fusion: chunk/span word count mismatch in sentence '" + sentence_id +
                        "'");
    for (size_t w = 0; w < chunk_words; ++w) {
        const size_t sent_word = static_cast<size_t>(c.start - 1) + w;
        if (sent_word >= sentence_enc.word_spans.size())
            throw DataError("fusion: chunk span exceeds sentence words in '" + sentence_id + "'");
        const WordSpan& cs = enc.word_spans[w];
        const WordSpan& ss = sentence_enc.word_spans[sent_word];
        const int k = std::min(cs.length(), ss.length());
        for (int i = 0; i < k; ++i) {
            pc.source_positions.push_back(cs.begin + i);
            pc.target_positions.push_back(ss.begin + i);
        }
    }
    return pc;
}

PreparedSentence prepare_sentence(const ParsedSentence& s, const Vocabulary& vocab,
                                  int main_max_len, const std::array<int, 4>& sub_max_lens,
                                  const ChunkerOptions& copts) {
    PreparedSentence ps;
    ps.id = s.id;
    TokenIdSequence enc = encode(vocab, s.text(), main_max_len, true);
    ps.ids = enc.ids;

    ChildMap cm = children_index(s);
    for (const AgreementChunk& c : chunk_sentence(s, cm, copts)) {
        PreparedChunk pc = align_chunk(c, enc, vocab, sub_max_lens[static_cast<size_t>(c.agreement)],
                                       s.id);
        if (pc.target_positions.empty()) continue;  // fully lost to truncation
        ps.chunks.push_back(std::move(pc));
    }
    return ps;
}

Stage2Forward stage2_forward(nn::Tape<float>& t, Stage2Model& m, const PreparedSentence& ps,
                             const std::vector<TokenId>& main_ids, bool no_fusion,
                             int exclude_agreement,
                             std::array<nn::AttnTrace<float>, 4>* sub_traces) {
    const long seq = static_cast<long>(main_ids.size());
    const long hidden = m.main.cfg.hidden_dim;

    Stage2Forward out;
    out.coverage.assign(static_cast<size_t>(seq), 0);

    auto base = nn::embed_input(t, m.main, main_ids);

    auto agg = t.input(nn::Tensor<float>({seq, hidden}));
    if (!no_fusion) {
        for (const PreparedChunk& pc : ps.chunks) {
            const int a = static_cast<int>(pc.agreement);
            if (a == exclude_agreement) continue;
            if (pc.source_positions.empty()) continue;

            nn::EncoderParams<float>& sub = m.subs[static_cast<size_t>(a)];
            auto x = nn::embed_input(t, sub, pc.ids);
            std::vector<uint8_t> ones(pc.ids.size(), 1);
            nn::AttnTrace<float>* trace =
                sub_traces ? &(*sub_traces)[static_cast<size_t>(a)] : nullptr;
            auto h = nn::encoder_forward(t, sub, x, ones, nullptr, trace);
            auto picked = t.select_rows(h, pc.source_positions);
            auto scaled = t.scale_by_scalar(picked, t.param(*m.scores[static_cast<size_t>(a)]));
            auto placed = t.scatter_rows(scaled, pc.target_positions, seq);
            agg = t.add(agg, placed);
            for (long pos : pc.target_positions)
                out.coverage[static_cast<size_t>(pos)] |= static_cast<uint8_t>(1 << a);
        }
    }
    auto agreement_emb = t.layer_norm(agg, t.param(*m.fusion_gain), t.param(*m.fusion_offset),
                                      static_cast<float>(nn::kLayerNormEps));
    auto fused = t.add(base, agreement_emb);

    std::vector<uint8_t> ones(main_ids.size(), 1);
    out.hidden = nn::encoder_forward(t, m.main, fused, ones);
    return out;
}

namespace {

std::vector<PreparedSentence> prepare_corpus(const std::vector<ParsedSentence>& corpus,
                                             const Vocabulary& vocab, const Stage2Model& m,
                                             const ChunkerOptions& copts, long* skipped) {
    std::array<int, 4> sub_lens;
    for (AgreementType a : kAllAgreements)
        sub_lens[static_cast<size_t>(a)] = m.subs[static_cast<size_t>(a)].cfg.max_seq_len;

    std::vector<PreparedSentence> out;
    long dropped = 0;
    for (const ParsedSentence& s : corpus) {
        PreparedSentence ps =
            prepare_sentence(s, vocab, m.main.cfg.max_seq_len, sub_lens, copts);
        bool maskable = false;
        for (TokenId id : ps.ids) maskable |= !vocab.is_special(id);
        if (!maskable) {
            ++dropped;
            continue;
        }
        out.push_back(std::move(ps));
    }
    if (skipped) *skipped = dropped;
    return out;
}

SeqOutcome stage2_sequence(Stage2Model& m, const PreparedSentence& ps, const MaskedBatchItem& mb,
                           bool no_fusion, nn::GradSink<float>* sink) {
    nn::Tape<float> t;
    Stage2Forward f = stage2_forward(t, m, ps, mb.corrupted, no_fusion);
    auto logits = nn::mlm_logits(t, m.main, f.hidden);
    auto ce = t.masked_ce_sum(logits, mb.labels, mb.loss_mask);
    if (sink) t.backward(ce.loss_sum, 1.0f, sink);
    SeqOutcome o;
    o.loss_sum = static_cast<double>(t.val(ce.loss_sum).v[0]);
    o.scored = ce.masked;
    o.correct = ce.correct;
    return o;
}

}  // namespace

Stage2Result train_stage2(const std::vector<ParsedSentence>& corpus, const Vocabulary& vocab,
                          const Stage2Config& cfg, Stage2Model& m, const ChunkerOptions& copts) {
    cfg.validate();
    if (corpus.empty()) throw DataError("stage2: corpus is empty");

    Stage2Result r;
    r.main_model = m.main.cfg;
    auto items = prepare_corpus(corpus, vocab, m, copts, &r.skipped_empty);
    if (items.empty()) throw DataError("stage2: no trainable sentences after encoding");
    r.sequences = static_cast<long>(items.size());

    if (cfg.clamp_scores || cfg.no_fusion) {
        for (auto* s : m.scores) {
            if (cfg.clamp_scores) s->value.v[0] = 0.0f;
            s->trainable = false;
        }
    }
    if (cfg.freeze_submodels) {
        for (AgreementType a : kAllAgreements)
            for (nn::Parameter<float>* p : m.subs[static_cast<size_t>(a)].all())
                p->trainable = false;
    }

    MaskingOptions mopts;
    mopts.mask_rate = cfg.mask_rate;
    const int vocab_size = vocab.size();

    r.train = run_train_loop(
        items.size(), cfg.loop(), *m.reg,
        [&](size_t item, uint64_t stream, nn::GradSink<float>& sink) {
            Rng mask_rng(cfg.seed, "mask", stream);
            MaskedBatchItem mb = mask_tokens(items[item].ids, vocab_size, mopts, mask_rng);
            return stage2_sequence(m, items[item], mb, cfg.no_fusion, &sink);
        });
    return r;
}

EvalResult stage2_mlm_eval(const std::vector<ParsedSentence>& corpus, const Vocabulary& vocab,
                           double mask_rate, uint64_t mask_seed, Stage2Model& m,
                           const ChunkerOptions& copts) {
    auto items = prepare_corpus(corpus, vocab, m, copts, nullptr);
    if (items.empty()) throw DataError("eval: no scorable sentences");
    MaskingOptions mopts;
    mopts.mask_rate = mask_rate;

    double loss_sum = 0;
    long masked = 0, correct = 0;
    for (size_t i = 0; i < items.size(); ++i) {
        Rng mask_rng(mask_seed, "evalmask", i);
        MaskedBatchItem mb = mask_tokens(items[i].ids, vocab.size(), mopts, mask_rng);
        SeqOutcome o = stage2_sequence(m, items[i], mb, false, nullptr);
        loss_sum += o.loss_sum;
        masked += o.scored;
        correct += o.correct;
    }
    EvalResult e;
    e.masked = masked;
    e.mean_loss = loss_sum / static_cast<double>(masked);
    e.accuracy = static_cast<double>(correct) / static_cast<double>(masked);
    return e;
}

void write_stage2_checkpoint(const std::string& path, const Stage2Model& m,
                             const Stage2Result& r) {
    nlohmann::json h;
    h["kind"] = "stage2";
    h["main"] = nlohmann::json::parse(model_config_to_json(m.main.cfg));
    nlohmann::json subs;
    for (AgreementType a : kAllAgreements)
        subs[agreement_name(a)] =
            nlohmann::json::parse(model_config_to_json(m.subs[static_cast<size_t>(a)].cfg));
    h["sub"] = subs;
    h["steps"] = r.train.steps_done;
    h["final_loss"] = r.train.final_loss;
    h["final_acc"] = r.train.final_acc;
    h["aborted"] = r.train.aborted;
    h["tool_version"] = kVersion;
    write_checkpoint(path, h.dump(), snapshot_registry(*m.reg));
}

Stage2Checkpoint load_stage2_checkpoint(const std::string& path) {
    Checkpoint ckpt = read_checkpoint(path);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(ckpt.header_json);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: bad header JSON in " + path + ": " + e.what());
    }
    if (h.value("kind", "") != "stage2")
        throw DataError("checkpoint: expected a stage-2 checkpoint: " + path);

    nn::ModelConfig main_cfg = model_config_from_json(h.at("main").dump());
    std::array<nn::ModelConfig, 4> sub_cfgs;
    for (AgreementType a : kAllAgreements)
        sub_cfgs[static_cast<size_t>(a)] =
            model_config_from_json(h.at("sub").at(agreement_name(a)).dump());

    Stage2Checkpoint out;
    out.model = build_stage2(sub_cfgs, main_cfg, /*seed=*/0);
    load_registry(*out.model.reg, ckpt);
    out.steps = h.value("steps", 0L);
    out.final_loss = h.value("final_loss", 0.0);
    out.final_acc = h.value("final_acc", 0.0);
    out.aborted = h.value("aborted", false);
    return out;
}

}  // namespace dalm
