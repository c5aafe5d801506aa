#pragma once

#include <cstdint>
#include <vector>

#include "dalm/rng.hpp"
#include "dalm/tokenizer.hpp"

namespace dalm {

struct MaskingOptions {
    double mask_rate = 0.15;
    // Of the selected positions: 80% -> [MASK], 10% -> random non-special id,
    // 10% -> left unchanged.
    bool force_at_least_one = true;
};

struct MaskedBatchItem {
    std::vector<TokenId> corrupted;     // model input
    std::vector<TokenId> labels;        // original id at selected positions, -1 elsewhere
    std::vector<uint8_t> loss_mask;     // 1 at selected positions
};

// BERT-style MLM corruption over the non-special positions of `ids`.
// Throws DataError when the sequence has no maskable position.
MaskedBatchItem mask_tokens(const std::vector<TokenId>& ids, int vocab_size,
                            const MaskingOptions& opts, Rng& rng);

}  // namespace dalm
