#include "dalm/masking.hpp"

#include "dalm/errors.hpp"

namespace dalm {

namespace {

bool is_special_id(TokenId id) { return id >= 0 && id < Vocabulary::kNumSpecials; }

}  // namespace

MaskedBatchItem mask_tokens(const std::vector<TokenId>& ids, int vocab_size,
                            const MaskingOptions& opts, Rng& rng) {
    MaskedBatchItem out;
    out.corrupted = ids;
    out.labels.assign(ids.size(), -1);
    out.loss_mask.assign(ids.size(), 0);

    std::vector<size_t> maskable;
    for (size_t i = 0; i < ids.size(); ++i)
        if (!is_special_id(ids[i])) maskable.push_back(i);
    if (maskable.empty()) throw DataError("mask_tokens: sequence has only special tokens");

    auto corrupt = [&](size_t i) {
        out.loss_mask[i] = 1;
        out.labels[i] = ids[i];
        const double which = rng.uniform01();
        if (which < 0.8) {
            out.corrupted[i] = Vocabulary::kMask;
        } else if (which < 0.9) {
            out.corrupted[i] = static_cast<TokenId>(
                rng.uniform_int(Vocabulary::kNumSpecials, vocab_size - 1));
        }  // else: keep the original id, but it still contributes to the loss
    };

    bool selected_any = false;
    for (size_t i : maskable) {
        if (rng.uniform01() < opts.mask_rate) {
            corrupt(i);
            selected_any = true;
        }
    }
    if (!selected_any && opts.force_at_least_one) {
        size_t pick = maskable[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(maskable.size()) - 1))];
        corrupt(pick);
    }
    return out;
}

}  // namespace dalm
