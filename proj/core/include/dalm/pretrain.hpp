#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dalm/chunker.hpp"
#include "dalm/masking.hpp"
#include "dalm/nn/encoder.hpp"
#include "dalm/tokenizer.hpp"
#include "dalm/train.hpp"

namespace dalm {

// Stage 1: one 2-layer MLM submodel per agreement type, trained on that
// agreement's chunk dataset.

inline constexpr int kSubmodelLayers = 2;

// Default per-agreement max input length, in subword pieces including
// [CLS]/[SEP]: sv=19, dobj=21, pobj=10, comp=23.
int default_max_length(AgreementType a);

struct Stage1Config {
    nn::ModelConfig model;  // max_seq_len carries the agreement's max input length
    long total_steps = 300;
    int micro_batch = 8;
    int accumulation_target = 32;
    double peak_lr = 25e-5;
    double peak_fraction = 0.5;
    double mask_rate = 0.15;
    uint64_t seed = 0;
    int threads = 1;
    nn::AdamWConfig adamw;

    void validate() const;
    TrainLoopConfig loop() const;
};

// Encodes every chunk with [CLS]/[SEP] at the given max length; sequences
// left with no maskable token are dropped and counted in *skipped.
std::vector<std::vector<TokenId>> encode_chunk_dataset(const ChunkDataset& d,
                                                       const Vocabulary& vocab, int max_len,
                                                       long* skipped = nullptr);

struct Stage1Result {
    AgreementType agreement = AgreementType::SV;
    nn::ModelConfig model;
    TrainLoopResult train;
    long sequences = 0;       // trainable sequences after encoding
    long skipped_empty = 0;   // chunks dropped for having no maskable token
};

// MLM training over the dataset with the triangular schedule. The registry
// and encoder must have been built with cfg.model (see build_encoder); the
// caller owns both, which keeps checkpointing and further use decoupled.
Stage1Result train_stage1(const ChunkDataset& data, const Vocabulary& vocab,
                          const Stage1Config& cfg, nn::ParamRegistry<float>& reg,
                          nn::EncoderParams<float>& model);

struct EvalResult {
    double accuracy = 0;
    double mean_loss = 0;
    long masked = 0;
};

// Deterministic masked evaluation: sequence i is corrupted with the stream
// split (mask_seed, "evalmask", i).
EvalResult mlm_eval(const ChunkDataset& data, const Vocabulary& vocab, double mask_rate,
                    uint64_t mask_seed, nn::EncoderParams<float>& model);

void write_stage1_checkpoint(const std::string& path, const Stage1Result& r,
                             const nn::ParamRegistry<float>& reg);

struct Stage1Checkpoint {
    AgreementType agreement = AgreementType::SV;
    nn::ModelConfig model;
    long steps = 0;
    double final_loss = 0;
    double final_acc = 0;
    bool aborted = false;
    std::shared_ptr<nn::ParamRegistry<float>> reg;
    nn::EncoderParams<float> encoder;
};

Stage1Checkpoint load_stage1_checkpoint(const std::string& path);

}  // namespace dalm
