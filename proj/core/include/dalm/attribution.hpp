#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "dalm/fusion.hpp"

namespace dalm {

// Per-agreement token attribution: attention received in the submodel's final
// layer, head-averaged over non-special queries, summed over the chunks
// covering the token, then max-normalized per agreement. Tokens outside all
// chunks of an agreement score 0.
struct AttributionReport {
    std::string sentence_id;
    std::vector<std::string> tokens;                    // sentence words, in order
    std::array<std::vector<double>, 4> scores;          // [agreement][token] in [0,1]
    std::array<std::vector<AgreementChunk>, 4> chunks;  // contributing chunks
};

AttributionReport attention_attribution(Stage2Model& m, const ParsedSentence& s,
                                        const Vocabulary& vocab,
                                        const ChunkerOptions& copts = {});

// CSV rows: token,agreement,score — tokens * 4 data rows.
void write_attribution_csv(std::ostream& out, const AttributionReport& report);

// Static HTML: one row per agreement, tokens shaded by score.
void write_attribution_html(std::ostream& out, const AttributionReport& report);

}  // namespace dalm
