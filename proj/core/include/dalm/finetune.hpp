#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dalm/fusion.hpp"

namespace dalm {

// Toy-scale downstream classification on top of a stage-2 checkpoint:
// a bias-free linear head over the final [CLS] vector, cosine-decayed AdamW,
// best-dev-epoch selection, plus the submodel-ablation harness.

struct LabeledExample {
    std::string text_a;
    std::string text_b;  // empty unless has_b
    bool has_b = false;
    int label = 0;
};

// TSV with a header of either "text_a\tlabel" or "text_a\ttext_b\tlabel".
std::vector<LabeledExample> load_examples_tsv(std::istream& in,
                                              const std::string& context_name = "<stream>");
std::vector<LabeledExample> load_examples_tsv_file(const std::string& path);

struct PairEncoding {
    std::vector<TokenId> ids;  // [CLS] a [SEP] (b [SEP])
    std::vector<WordSpan> spans_a;
    std::vector<WordSpan> spans_b;
};

// Truncation drops pieces from the end of b first, then from the end of a;
// the specials always survive.
PairEncoding encode_pair(const Vocabulary& vocab, const std::string& text_a,
                         const std::string& text_b, bool has_b, int max_len);

struct PreparedExample {
    PreparedSentence sentence;
    int label = 0;
};

// Optional parse lists run parallel to the examples (entry i belongs to
// example i) and supply the dependency chunks for the fusion path; without
// them examples carry no chunks. Parse forms must match the example text
// word-for-word (case-insensitive).
std::vector<PreparedExample> prepare_examples(
    const std::vector<LabeledExample>& examples,
    const std::vector<ParsedSentence>* parses_a, const std::vector<ParsedSentence>* parses_b,
    const Vocabulary& vocab, const Stage2Model& m, const ChunkerOptions& copts = {});

struct FinetuneConfig {
    int epochs = 5;
    int batch_size = 16;
    double lr = 1e-4;  // cosine-decayed to 0 across all steps
    uint64_t seed = 0;
    int threads = 1;
    int num_classes = 2;
    bool train_submodels = false;  // submodels and scores stay frozen by default
    bool train_scores = false;
    int ablate = -1;  // AgreementType index: clamp its score to 0 and drop it from the graph
    nn::AdamWConfig adamw;

    void validate() const;
};

struct FinetuneResult {
    std::vector<TraceRow> trace;       // per optimizer step; acc is train-batch accuracy
    std::vector<double> dev_acc;       // one entry per epoch
    double best_dev_acc = 0;
    int best_epoch = 0;                // 1-based; 0 means the initialized head (epochs = 0)
};

// Trains in place and leaves the model at its best-dev-epoch parameters.
FinetuneResult finetune(Stage2Model& m, const std::vector<PreparedExample>& train,
                        const std::vector<PreparedExample>& dev, const FinetuneConfig& cfg);

// Accuracy of the current parameters; ablate as in FinetuneConfig.
double classify_eval(Stage2Model& m, const std::vector<PreparedExample>& examples,
                     int ablate = -1);

struct AblationRow {
    AgreementType removed = AgreementType::SV;
    double baseline_acc = 0;
    double ablated_acc = 0;
    double remaining_pct = 0;  // 100 * ablated / baseline
};

AblationRow make_ablation_row(AgreementType removed, double baseline_acc, double ablated_acc);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace dalm
