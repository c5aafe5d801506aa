#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dalm/conllu.hpp"

namespace dalm {

// The four dependency-agreement chunk types. Each is anchored by a fixed set
// of trigger dependency labels.
enum class AgreementType { SV = 0, DOBJ = 1, POBJ = 2, COMP = 3 };

inline constexpr std::array<AgreementType, 4> kAllAgreements = {
    AgreementType::SV, AgreementType::DOBJ, AgreementType::POBJ, AgreementType::COMP};

const char* agreement_name(AgreementType a);                     // "sv" | "dobj" | "pobj" | "comp"
std::optional<AgreementType> agreement_from_name(std::string_view name);

const std::vector<std::string>& trigger_set(AgreementType a);

// Which agreement (if any) a deprel triggers. Label sets are disjoint.
std::optional<AgreementType> agreement_for_deprel(const std::string& deprel);

struct AgreementChunk {
    AgreementType agreement = AgreementType::SV;
    std::string sentence_id;
    int trigger_index = 0;  // 1-based word index of the trigger token
    int start = 0;          // 1-based, inclusive
    int end = 0;            // 1-based, inclusive
    std::string text;       // space-joined surface forms over [start, end]

    int word_length() const { return end - start + 1; }
};

struct ChunkDataset {
    AgreementType agreement = AgreementType::SV;
    std::vector<AgreementChunk> chunks;
};

enum class ContiguityMode {
    Subtree,         // contiguous run of the trigger's full subtree (default)
    DirectChildren,  // contiguous run over the trigger plus its direct children only
};

struct ChunkerOptions {
    ContiguityMode contiguity = ContiguityMode::Subtree;
};

// Extracts one chunk for a trigger token. Returns nullopt when the trigger
// attaches to the artificial root (there is no head word to end the span).
// The span is [min(left, head), max(trigger, head)] where `left` is the start
// of the contiguous run, ending at the trigger, of positions inside the
// trigger's subtree.
std::optional<AgreementChunk> extract_chunk(const ParsedSentence& s, const ChildMap& cm,
                                            int trigger_index, AgreementType a,
                                            const ChunkerOptions& opts = {});

// All chunks of a sentence in (agreement, trigger_index) order.
std::vector<AgreementChunk> chunk_sentence(const ParsedSentence& s, const ChildMap& cm,
                                           const ChunkerOptions& opts = {});

struct ChunkCorpusResult {
    std::array<ChunkDataset, 4> datasets;  // indexed by AgreementType
    size_t sentences = 0;
    size_t root_triggers_skipped = 0;

    ChunkDataset& of(AgreementType a) { return datasets[static_cast<size_t>(a)]; }
    const ChunkDataset& of(AgreementType a) const { return datasets[static_cast<size_t>(a)]; }
};

ChunkCorpusResult chunk_corpus(const std::vector<ParsedSentence>& sentences,
                               const ChunkerOptions& opts = {});

// Nearest-rank percentile of chunk word-lengths: the smallest length L such
// that at least p% of the chunks have word_length() <= L. p in (0, 100].
int length_stats(const ChunkDataset& d, double percentile);

// JSON Lines persistence, one chunk per line:
//   {"agreement":"sv","sentence_id":"s1","trigger_index":1,"start":1,"end":3,"text":"..."}
void write_chunks_jsonl(const ChunkDataset& d, std::ostream& out);
ChunkDataset read_chunks_jsonl(std::istream& in, const std::string& context_name = "<stream>");
ChunkDataset read_chunks_jsonl_file(const std::string& path);

}  // namespace dalm
