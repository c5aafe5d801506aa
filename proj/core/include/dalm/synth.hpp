#pragma once

#include <cstdint>
#include <vector>

#include "dalm/conllu.hpp"
#include "dalm/finetune.hpp"

namespace dalm {

// Deterministic toy-data generators. The bundled data/toy files are produced
// by these (see tools/), and the task generators draw from the same word
// pools as the corpus so a vocabulary built from the corpus covers the tasks.

// Mixed parse templates covering all four agreement types; with n a multiple
// of 3 each template occurs n/3 times (COMP chunks come from every third
// sentence).
std::vector<ParsedSentence> make_toy_corpus(size_t n, uint64_t seed);

// "NAME VERB OBJECT ." with every slot drawn independently and uniformly, so
// content tokens are unpredictable from the rest of the sentence alone, while
// each one is covered by an SV or DOBJ chunk.
std::vector<ParsedSentence> make_triple_corpus(size_t n, uint64_t seed);

struct ToyTask {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> dev;
    std::vector<ParsedSentence> train_parses;
    std::vector<ParsedSentence> dev_parses;
    int num_classes = 2;
};

// Linearly separable: the label is carried by a marker word present in every
// sentence ("indeed" vs "perhaps").
ToyTask make_marker_task(size_t train_n, size_t dev_n, uint64_t seed);

// The label depends on which name fills the SUBJECT role; the same names also
// occur as objects and as fronted distractors, so bag-of-words cannot solve
// it — only the syntactic role disambiguates.
ToyTask make_subject_task(size_t train_n, size_t dev_n, uint64_t seed);

}  // namespace dalm
