#include "dalm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "dalm/errors.hpp"

namespace dalm {

namespace {

const char* kSpecialNames[Vocabulary::kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

std::string lowercased(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Length in bytes of the UTF-8 codepoint starting at s[i].
size_t utf8_len(const std::string& s, size_t i) {
    unsigned char b = static_cast<unsigned char>(s[i]);
    size_t n = 1;
    if ((b & 0xE0) == 0xC0) n = 2;
    else if ((b & 0xF0) == 0xE0) n = 3;
    else if ((b & 0xF8) == 0xF0) n = 4;
    return std::min(n, s.size() - i);
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const char* name : kSpecialNames) add_piece(name);
}

TokenId Vocabulary::add_piece(const std::string& piece) {
    auto it = index_.find(piece);
    if (it != index_.end()) return it->second;
    TokenId id = static_cast<TokenId>(pieces_.size());
    pieces_.push_back(piece);
    index_.emplace(piece, id);
    return id;
}

TokenId Vocabulary::lookup(const std::string& piece) const {
    auto it = index_.find(piece);
    return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::piece(TokenId id) const {
    if (id < 0 || id >= size()) throw DataError("vocabulary id out of range: " + std::to_string(id));
    return pieces_[static_cast<size_t>(id)];
}

void Vocabulary::save(std::ostream& out) const {
    for (const std::string& p : pieces_) out << p << "\n";
}

Vocabulary Vocabulary::load(std::istream& in, const std::string& context_name) {
    Vocabulary v;
    std::string line;
    TokenId id = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (id < kNumSpecials) {
            if (line != kSpecialNames[id])
                throw DataError(context_name + ": reserved id " + std::to_string(id) + " must be " +
                                kSpecialNames[id] + ", found '" + line + "'");
        } else {
            if (v.lookup(line) >= 0)
                throw DataError(context_name + ": duplicate piece '" + line + "' at id " +
                                std::to_string(id));
            v.add_piece(line);
        }
        ++id;
    }
    if (id < kNumSpecials) throw DataError(context_name + ": vocabulary misses reserved specials");
    return v;
}

Vocabulary Vocabulary::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary: " + path);
    return load(in, path);
}

Vocabulary build_vocab_from_words(const std::vector<std::string>& words, int max_size) {
    if (max_size < Vocabulary::kNumSpecials + 1)
        throw DataError("build_vocab: max_size must be at least " +
                        std::to_string(Vocabulary::kNumSpecials + 1));

    std::map<std::string, int64_t> freq;  // ordered -> lexicographic tie-break for free
    for (const std::string& w : words) {
        if (!w.empty()) ++freq[lowercased(w)];
    }

    std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    for (const auto& [word, count] : ranked) {
        if (v.size() >= max_size) break;
        v.add_piece(word);
    }

    // Character fallback units keep words segmentable when whole words no
    // longer fit: the word-initial codepoint as a bare piece, the rest as
    // "##" continuations. Ranked by occurrence-weighted frequency.
    std::map<std::string, int64_t> unit_freq;
    for (const auto& [word, count] : ranked) {
        size_t i = 0;
        while (i < word.size()) {
            size_t n = utf8_len(word, i);
            std::string unit = (i == 0) ? word.substr(0, n) : "##" + word.substr(i, n);
            unit_freq[unit] += count;
            i += n;
        }
    }
    std::vector<std::pair<std::string, int64_t>> units(unit_freq.begin(), unit_freq.end());
    std::stable_sort(units.begin(), units.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [unit, count] : units) {
        if (v.size() >= max_size) break;
        v.add_piece(unit);
    }
    return v;
}

Vocabulary build_vocab(std::istream& corpus_text, int max_size) {
    std::vector<std::string> words;
    std::string w;
    while (corpus_text >> w) words.push_back(w);
    return build_vocab_from_words(words, max_size);
}

namespace {

// Greedy longest-match-first; empty result means un-encodable residue.
std::vector<TokenId> segment_word(const Vocabulary& v, const std::string& word) {
    std::vector<TokenId> out;
    size_t pos = 0;
    while (pos < word.size()) {
        TokenId best = -1;
        size_t best_len = 0;
        for (size_t len = word.size() - pos; len >= 1; --len) {
            std::string candidate = pos == 0 ? word.substr(0, len) : "##" + word.substr(pos, len);
            TokenId id = v.lookup(candidate);
            if (id >= 0) {
                best = id;
                best_len = len;
                break;
            }
        }
        if (best < 0) return {};
        out.push_back(best);
        pos += best_len;
    }
    return out;
}

}  // namespace

TokenIdSequence encode(const Vocabulary& v, const std::string& text, int max_len,
                       bool add_specials) {
    if (add_specials && max_len < 2)
        throw DataError("encode: max_len must be >= 2 when adding [CLS]/[SEP]");
    if (max_len < 1) throw DataError("encode: max_len must be >= 1");

    std::vector<std::string> words;
    {
        std::string cur;
        for (char c : text) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) words.push_back(std::move(cur));
    }

    TokenIdSequence seq;
    if (add_specials) seq.ids.push_back(Vocabulary::kCls);
    for (const std::string& raw : words) {
        std::string word = lowercased(raw);
        std::vector<TokenId> pieces = segment_word(v, word);
        if (pieces.empty()) pieces = {Vocabulary::kUnk};
        WordSpan span;
        span.begin = static_cast<int>(seq.ids.size());
        for (TokenId id : pieces) seq.ids.push_back(id);
        span.end = static_cast<int>(seq.ids.size());
        seq.word_spans.push_back(span);
    }
    if (add_specials) seq.ids.push_back(Vocabulary::kSep);

    const int limit = max_len;
    if (static_cast<int>(seq.ids.size()) > limit) {
        if (add_specials) {
            seq.ids.resize(static_cast<size_t>(limit - 1));
            seq.ids.push_back(Vocabulary::kSep);
            const int cutoff = limit - 1;  // position of [SEP]
            for (WordSpan& s : seq.word_spans) {
                s.begin = std::min(s.begin, cutoff);
                s.end = std::min(s.end, cutoff);
            }
        } else {
            seq.ids.resize(static_cast<size_t>(limit));
            for (WordSpan& s : seq.word_spans) {
                s.begin = std::min(s.begin, limit);
                s.end = std::min(s.end, limit);
            }
        }
    }
    return seq;
}

std::string decode(const Vocabulary& v, const std::vector<TokenId>& ids) {
    std::string out;
    for (TokenId id : ids) {
        const std::string& p = v.piece(id);  // validates range
        if (id == Vocabulary::kPad || id == Vocabulary::kCls || id == Vocabulary::kSep) continue;
        if (p.size() > 2 && p[0] == '#' && p[1] == '#') {
            out += p.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += p;
        }
    }
    return out;
}

}  // namespace dalm
