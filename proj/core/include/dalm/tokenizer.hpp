#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace dalm {

using TokenId = int32_t;

// Subword inventory. Ids 0..4 are reserved for the special tokens; pieces
// starting with "##" only match word-internal continuations.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kCls = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kMask = 4;
    static constexpr int kNumSpecials = 5;

    Vocabulary();  // specials only

    TokenId add_piece(const std::string& piece);  // no-op if present; returns id
    TokenId lookup(const std::string& piece) const;  // -1 if absent

    const std::string& piece(TokenId id) const;
    int size() const { return static_cast<int>(pieces_.size()); }

    bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }

    void save(std::ostream& out) const;  // one piece per line, line number = id
    static Vocabulary load(std::istream& in, const std::string& context_name = "<stream>");
    static Vocabulary load_file(const std::string& path);

private:
    std::vector<std::string> pieces_;
    std::unordered_map<std::string, TokenId> index_;
};

struct WordSpan {
    int begin = 0;  // first piece position in ids (inclusive)
    int end = 0;    // one past the last piece position (exclusive)

    int length() const { return end - begin; }
    bool empty() const { return end <= begin; }
};

struct TokenIdSequence {
    std::vector<TokenId> ids;
    std::vector<WordSpan> word_spans;  // one per input word, in order
};

// Deterministic desk-scale vocabulary: lowercased whitespace words ranked by
// (frequency desc, lexicographic asc); words that do not fit get "##"-style
// character fallback units so they stay encodable while capacity allows.
Vocabulary build_vocab(std::istream& corpus_text, int max_size);
Vocabulary build_vocab_from_words(const std::vector<std::string>& words, int max_size);

// Greedy longest-match-first segmentation per word; a word with unmatched
// residue becomes a single [UNK]. With add_specials, [CLS] and [SEP] wrap the
// pieces and truncation drops interior pieces while keeping the final [SEP].
TokenIdSequence encode(const Vocabulary& v, const std::string& text, int max_len,
                       bool add_specials);

// Inverse of encode up to lowercasing and [UNK] loss. Throws on out-of-range ids.
std::string decode(const Vocabulary& v, const std::vector<TokenId>& ids);

}  // namespace dalm
