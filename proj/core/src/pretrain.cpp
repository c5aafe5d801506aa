#include "dalm/pretrain.hpp"

#include <nlohmann/json.hpp>

#include "dalm/checkpoint.hpp"
#include "dalm/errors.hpp"
#include "dalm/version.hpp"

namespace dalm {

int default_max_length(AgreementType a) {
    switch (a) {
        case AgreementType::SV: return 19;
        case AgreementType::DOBJ: return 21;
        case AgreementType::POBJ: return 10;
        case AgreementType::COMP: return 23;
    }
    throw std::logic_error("default_max_length: bad agreement");
}

void Stage1Config::validate() const {
    model.validate();
    if (model.max_seq_len < 2) throw DataError("stage1: max input length must be >= 2");
    if (!(mask_rate > 0.0 && mask_rate < 1.0))
        throw DataError("stage1: mask_rate must be in (0,1)");
    loop().validate();
}

TrainLoopConfig Stage1Config::loop() const {
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

std::vector<std::vector<TokenId>> encode_chunk_dataset(const ChunkDataset& d,
                                                       const Vocabulary& vocab, int max_len,
                                                       long* skipped) {
    std::vector<std::vector<TokenId>> out;
    long dropped = 0;
    for (const AgreementChunk& c : d.chunks) {
        TokenIdSequence enc = encode(vocab, c.text, max_len, true);
        bool maskable = false;
        for (TokenId id : enc.ids) maskable |= !vocab.is_special(id);
        if (!maskable) {
            ++dropped;
            continue;
        }
        out.push_back(std::move(enc.ids));
    }
    if (skipped) *skipped = dropped;
    return out;
}

namespace {

// Forward + loss for one already-corrupted sequence; shared by training
// (backward into a sink) and evaluation (forward only).
SeqOutcome mlm_sequence(nn::EncoderParams<float>& model, const MaskedBatchItem& mb,
                        nn::GradSink<float>* sink) {
    nn::Tape<float> t;
    auto x = nn::embed_input(t, model, mb.corrupted);
    std::vector<uint8_t> ones(mb.corrupted.size(), 1);
    auto h = nn::encoder_forward(t, model, x, ones);
    auto logits = nn::mlm_logits(t, model, h);
    auto ce = t.masked_ce_sum(logits, mb.labels, mb.loss_mask);
    if (sink) t.backward(ce.loss_sum, 1.0f, sink);
    SeqOutcome o;
    o.loss_sum = static_cast<double>(t.val(ce.loss_sum).v[0]);
    o.scored = ce.masked;
    o.correct = ce.correct;
    return o;
}

}  // namespace

Stage1Result train_stage1(const ChunkDataset& data, const Vocabulary& vocab,
                          const Stage1Config& cfg, nn::ParamRegistry<float>& reg,
                          nn::EncoderParams<float>& model) {
    cfg.validate();
    if (data.chunks.empty()) throw DataError("stage1: chunk dataset is empty");

    Stage1Result r;
    r.agreement = data.agreement;
    r.model = cfg.model;
    auto items = encode_chunk_dataset(data, vocab, cfg.model.max_seq_len, &r.skipped_empty);
    if (items.empty()) throw DataError("stage1: no trainable sequences after encoding");
    r.sequences = static_cast<long>(items.size());

    MaskingOptions mopts;
    mopts.mask_rate = cfg.mask_rate;
    const int vocab_size = vocab.size();

    r.train = run_train_loop(
        items.size(), cfg.loop(), reg,
        [&](size_t item, uint64_t stream, nn::GradSink<float>& sink) {
            Rng mask_rng(cfg.seed, "mask", stream);
            MaskedBatchItem mb = mask_tokens(items[item], vocab_size, mopts, mask_rng);
            return mlm_sequence(model, mb, &sink);
        });
    return r;
}

EvalResult mlm_eval(const ChunkDataset& data, const Vocabulary& vocab, double mask_rate,
                    uint64_t mask_seed, nn::EncoderParams<float>& model) {
    auto items = encode_chunk_dataset(data, vocab, model.cfg.max_seq_len, nullptr);
    if (items.empty()) throw DataError("eval: no scorable sequences");
    MaskingOptions mopts;
    mopts.mask_rate = mask_rate;

    double loss_sum = 0;
    long masked = 0, correct = 0;
    for (size_t i = 0; i < items.size(); ++i) {
        Rng mask_rng(mask_seed, "evalmask", i);
        MaskedBatchItem mb = mask_tokens(items[i], vocab.size(), mopts, mask_rng);
        SeqOutcome o = mlm_sequence(model, mb, nullptr);
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

void write_stage1_checkpoint(const std::string& path, const Stage1Result& r,
                             const nn::ParamRegistry<float>& reg) {
    nlohmann::json h;
    h["kind"] = "stage1";
    h["agreement"] = agreement_name(r.agreement);
    h["model"] = nlohmann::json::parse(model_config_to_json(r.model));
    h["steps"] = r.train.steps_done;
    h["final_loss"] = r.train.final_loss;
    h["final_acc"] = r.train.final_acc;
    h["aborted"] = r.train.aborted;
    h["tool_version"] = kVersion;
    write_checkpoint(path, h.dump(), snapshot_registry(reg));
}

Stage1Checkpoint load_stage1_checkpoint(const std::string& path) {
    Checkpoint ckpt = read_checkpoint(path);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(ckpt.header_json);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: bad header JSON in " + path + ": " + e.what());
    }
    if (h.value("kind", "") != "stage1")
        throw DataError("checkpoint: expected a stage-1 checkpoint: " + path);

    Stage1Checkpoint out;
    auto a = agreement_from_name(h.value("agreement", ""));
    if (!a) throw DataError("checkpoint: bad agreement in " + path);
    out.agreement = *a;
    out.model = model_config_from_json(h.at("model").dump());
    out.steps = h.value("steps", 0L);
    out.final_loss = h.value("final_loss", 0.0);
    out.final_acc = h.value("final_acc", 0.0);
    out.aborted = h.value("aborted", false);

    out.reg = std::make_shared<nn::ParamRegistry<float>>();
    out.encoder = nn::build_encoder(*out.reg, out.model, /*seed=*/0);
    load_registry(*out.reg, ckpt);
    return out;
}

}  // namespace dalm
