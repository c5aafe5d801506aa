#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "dalm/chunker.hpp"
#include "dalm/conllu.hpp"
#include "dalm/pretrain.hpp"

namespace dalm {

// Stage 2: per-sentence agreement embeddings (score-scaled submodel outputs
// scattered back to sentence positions, summed, layer-normalized) fused
// additively with the token and position embeddings of a main encoder.

struct Stage2Config {
    nn::ModelConfig main_model;
    long total_steps = 500;
    int micro_batch = 8;
    int accumulation_target = 32;
    double peak_lr = 25e-5;
    double peak_fraction = 0.5;
    double mask_rate = 0.15;
    uint64_t seed = 0;
    int threads = 1;
    bool freeze_submodels = false;
    bool clamp_scores = false;  // scores pinned to 0 and frozen
    bool no_fusion = false;     // fusion path structurally absent (LN still sees zeros)
    nn::AdamWConfig adamw;

    void validate() const;
    TrainLoopConfig loop() const;
};

struct Stage2Model {
    std::shared_ptr<nn::ParamRegistry<float>> reg;
    std::array<nn::EncoderParams<float>, 4> subs;  // parameter prefix "sub.<agreement>."
    std::array<nn::Parameter<float>*, 4> scores;   // "score.<agreement>", shape [1], init 1.0
    nn::Parameter<float>* fusion_gain = nullptr;   // "fusion.gain"
    nn::Parameter<float>* fusion_offset = nullptr; // "fusion.offset"
    nn::EncoderParams<float> main;                 // parameter prefix "main."

    int sub_max_len(AgreementType a) const {
        return subs[static_cast<size_t>(a)].cfg.max_seq_len;
    }
};

// Submodel and main hidden widths must agree (the fusion is an addition).
Stage2Model build_stage2(const std::array<nn::ModelConfig, 4>& sub_cfgs,
                         const nn::ModelConfig& main_cfg, uint64_t seed);

// Copies stage-1 weights into the "sub.<agreement>." parameter block; the
// checkpoint's agreement and architecture must match.
void load_submodel_weights(Stage2Model& m, AgreementType a, const Stage1Checkpoint& ckpt);

// One chunk of one sentence, tokenized and aligned: chunk-sequence position
// source_positions[i] contributes to main-sequence position target_positions[i].
struct PreparedChunk {
    AgreementType agreement = AgreementType::SV;
    std::vector<TokenId> ids;  // [CLS] chunk pieces [SEP], truncated to the agreement max
    std::vector<long> source_positions;
    std::vector<long> target_positions;
};

struct PreparedSentence {
    std::string id;
    std::vector<TokenId> ids;  // main-path encoding (uncorrupted)
    std::vector<PreparedChunk> chunks;
};

// Tokenizes one chunk and aligns its pieces to the sentence's piece positions
// via the word spans of both encodings. Pieces lost to truncation on either
// side contribute nothing. Throws DataError (naming the sentence) when the
// chunk's word count does not match its span.
PreparedChunk align_chunk(const AgreementChunk& c, const TokenIdSequence& sentence_enc,
                          const Vocabulary& vocab, int sub_max_len,
                          const std::string& sentence_id);

PreparedSentence prepare_sentence(const ParsedSentence& s, const Vocabulary& vocab,
                                  int main_max_len,
                                  const std::array<int, 4>& sub_max_lens,
                                  const ChunkerOptions& copts = {});

struct Stage2Forward {
    nn::Tape<float>::Var hidden = -1;      // main encoder output [seq, hidden]
    std::vector<uint8_t> coverage;         // per position, bit a set iff agreement a contributed
};

// Builds the fused forward graph for one sequence: token+position embeddings
// of `main_ids` (normally the corrupted ids) plus LayerNorm of the summed
// score-scaled submodel vectors; submodels always read the unmasked chunk
// text. With exclude_agreement in [0,3] that submodel is left out of the
// graph entirely; with no_fusion all of them are.
Stage2Forward stage2_forward(nn::Tape<float>& t, Stage2Model& m, const PreparedSentence& ps,
                             const std::vector<TokenId>& main_ids, bool no_fusion = false,
                             int exclude_agreement = -1,
                             std::array<nn::AttnTrace<float>, 4>* sub_traces = nullptr);

struct Stage2Result {
    nn::ModelConfig main_model;
    TrainLoopResult train;
    long sequences = 0;
    long skipped_empty = 0;
};

Stage2Result train_stage2(const std::vector<ParsedSentence>& corpus, const Vocabulary& vocab,
                          const Stage2Config& cfg, Stage2Model& m,
                          const ChunkerOptions& copts = {});

EvalResult stage2_mlm_eval(const std::vector<ParsedSentence>& corpus, const Vocabulary& vocab,
                           double mask_rate, uint64_t mask_seed, Stage2Model& m,
                           const ChunkerOptions& copts = {});

void write_stage2_checkpoint(const std::string& path, const Stage2Model& m,
                             const Stage2Result& r);

struct Stage2Checkpoint {
    Stage2Model model;
    long steps = 0;
    double final_loss = 0;
    double final_acc = 0;
    bool aborted = false;
};

Stage2Checkpoint load_stage2_checkpoint(const std::string& path);

}  // namespace dalm
