#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dalm {

// One word of a dependency-parsed sentence. Indices are 1-based; head 0 means
// the token attaches to the artificial root.
struct ParsedToken {
    int index = 0;
    std::string form;
    int head = 0;
    std::string deprel;  // lowercased on ingest
};

struct ParsedSentence {
    std::string id;
    std::vector<ParsedToken> tokens;

    int size() const { return static_cast<int>(tokens.size()); }
    const ParsedToken& token(int index_1based) const { return tokens[static_cast<size_t>(index_1based - 1)]; }

    // Space-joined surface forms of words [start, end], 1-based inclusive.
    std::string text_span(int start, int end) const;
    std::string text() const { return text_span(1, size()); }
};

// children[i] = sorted direct dependents of token i+1; children of the root
// (head == 0) are not represented here, they are the sentence's root tokens.
struct ChildMap {
    std::vector<std::vector<int>> children;

    const std::vector<int>& of(int index_1based) const { return children[static_cast<size_t>(index_1based - 1)]; }
};

ChildMap children_index(const ParsedSentence& s);

// Validates the structural invariants: contiguous 1..n ids, heads in range,
// at least one root, acyclic head chains. Returns an empty string when valid,
// otherwise a diagnostic.
std::string validate_sentence(const ParsedSentence& s);

struct ConlluDiagnostic {
    size_t line = 0;          // 1-based line in the input, 0 if sentence-level
    std::string sentence_id;  // may be empty for record-level errors
    std::string message;
};

struct ConlluResult {
    std::vector<ParsedSentence> sentences;
    std::vector<ConlluDiagnostic> rejected;  // one entry per skipped sentence

    size_t warning_count() const { return rejected.size(); }
};

struct ConlluOptions {
    // strict: throw DataError at the first malformed record or invalid
    // sentence. Otherwise skip the sentence and record a diagnostic.
    bool strict = false;
};

ConlluResult parse_conllu(std::istream& in, const ConlluOptions& opts = {});
ConlluResult parse_conllu_file(const std::string& path, const ConlluOptions& opts = {});

// Writes ID, FORM, HEAD and DEPREL; the remaining CoNLL-U columns are "_".
void serialize_conllu(const std::vector<ParsedSentence>& sentences, std::ostream& out);

}  // namespace dalm
