#include "dalm/synth.hpp"

#include <array>
#include <string>

#include "dalm/rng.hpp"

namespace dalm {

namespace {

// Shared pools. The first half of kNames is "class A" for the subject task.
constexpr std::array<const char*, 12> kNames = {"archer", "bellamy", "carson", "dalton",
                                                "emerson", "foster",  "griffin", "hollis",
                                                "irving",  "jasper",  "keller",  "lawson"};
constexpr size_t kClassANames = 6;
constexpr std::array<const char*, 8> kVerbs = {"saw",    "met",     "called",  "joined",
                                               "helped", "praised", "trusted", "warned"};
constexpr std::array<const char*, 6> kPlaces = {"bar",    "office", "library",
                                                "market", "station", "harbor"};
constexpr std::array<const char*, 6> kAdjs = {"busy", "tired", "calm", "eager", "quiet", "proud"};
constexpr std::array<const char*, 3> kPreps = {"at", "near", "in"};

template <size_t N>
std::string pick(const std::array<const char*, N>& pool, Rng& rng) {
    return pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(N) - 1))];
}

struct TokSpec {
    std::string form;
    int head;
    const char* deprel;
};

ParsedSentence make_sentence(std::string id, std::vector<TokSpec> spec) {
    ParsedSentence s;
    s.id = std::move(id);
    int index = 1;
    for (TokSpec& t : spec) {
        ParsedToken tok;
        tok.index = index++;
        tok.form = std::move(t.form);
        tok.head = t.head;
        tok.deprel = t.deprel;
        s.tokens.push_back(std::move(tok));
    }
    return s;
}

}  // namespace

std::vector<ParsedSentence> make_toy_corpus(size_t n, uint64_t seed) {
    Rng rng(seed, "toycorpus");
    std::vector<ParsedSentence> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const std::string id = "toy-" + std::to_string(i + 1);
        switch (i % 3) {
            case 0: {
                // "NAME had seen NAME2 in the PLACE ." — sv, dobj, pobj
                std::string a = pick(kNames, rng), b = pick(kNames, rng), p = pick(kPlaces, rng);
                out.push_back(make_sentence(id, {{a, 3, "nsubj"},
                                                 {"had", 3, "aux"},
                                                 {"seen", 0, "root"},
                                                 {b, 3, "dobj"},
                                                 {"in", 3, "prep"},
                                                 {"the", 7, "det"},
                                                 {p, 5, "pobj"},
                                                 {".", 3, "punct"}}));
                break;
            }
            case 1: {
                // "NAME was very ADJ PREP the PLACE ." — sv, comp, pobj
                std::string a = pick(kNames, rng), adj = pick(kAdjs, rng);
                std::string prep = pick(kPreps, rng), p = pick(kPlaces, rng);
                out.push_back(make_sentence(id, {{a, 2, "nsubj"},
                                                 {"was", 0, "root"},
                                                 {"very", 4, "advmod"},
                                                 {adj, 2, "acomp"},
                                                 {prep, 4, "prep"},
                                                 {"the", 7, "det"},
                                                 {p, 5, "pobj"},
                                                 {".", 2, "punct"}}));
                break;
            }
            default: {
                // "the NAME VERB the NAME2 MARKER ." — sv, dobj
                std::string a = pick(kNames, rng), v = pick(kVerbs, rng), b = pick(kNames, rng);
                std::string marker = rng.uniform01() < 0.5 ? "indeed" : "perhaps";
                out.push_back(make_sentence(id, {{"the", 2, "det"},
                                                 {a, 3, "nsubj"},
                                                 {v, 0, "root"},
                                                 {"the", 5, "det"},
                                                 {b, 3, "dobj"},
                                                 {marker, 3, "advmod"},
                                                 {".", 3, "punct"}}));
                break;
            }
        }
    }
    return out;
}

std::vector<ParsedSentence> make_triple_corpus(size_t n, uint64_t seed) {
    Rng rng(seed, "triplecorpus");
    std::vector<ParsedSentence> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        std::string a = pick(kNames, rng), v = pick(kVerbs, rng), b = pick(kNames, rng);
        out.push_back(make_sentence("triple-" + std::to_string(i + 1), {{a, 2, "nsubj"},
                                                                        {v, 0, "root"},
                                                                        {b, 2, "dobj"},
                                                                        {".", 2, "punct"}}));
    }
    return out;
}

namespace {

void fill_marker_task(std::vector<LabeledExample>& examples,
                      std::vector<ParsedSentence>& parses, size_t n, const char* id_prefix,
                      Rng& rng) {
    for (size_t i = 0; i < n; ++i) {
        std::string a = pick(kNames, rng), v = pick(kVerbs, rng), b = pick(kNames, rng);
        const bool positive = rng.uniform01() < 0.5;
        const std::string marker = positive ? "indeed" : "perhaps";

        LabeledExample ex;
        ex.text_a = "the " + a + " " + v + " the " + b + " " + marker + " .";
        ex.label = positive ? 1 : 0;
        examples.push_back(std::move(ex));
        parses.push_back(make_sentence(id_prefix + std::to_string(i + 1),
                                       {{"the", 2, "det"},
                                        {a, 3, "nsubj"},
                                        {v, 0, "root"},
                                        {"the", 5, "det"},
                                        {b, 3, "dobj"},
                                        {marker, 3, "advmod"},
                                        {".", 3, "punct"}}));
    }
}

void fill_subject_task(std::vector<LabeledExample>& examples,
                       std::vector<ParsedSentence>& parses, size_t n, const char* id_prefix,
                       Rng& rng) {
    for (size_t i = 0; i < n; ++i) {
        const size_t subject_ix =
            static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kNames.size()) - 1));
        std::string subj = kNames[subject_ix];
        std::string obj = pick(kNames, rng);
        std::string v = pick(kVerbs, rng);
        const int label = subject_ix < kClassANames ? 1 : 0;

        LabeledExample ex;
        ex.label = label;
        if (rng.uniform01() < 0.5) {
            // "the SUBJ VERB the OBJ ."
            ex.text_a = "the " + subj + " " + v + " the " + obj + " .";
            parses.push_back(make_sentence(id_prefix + std::to_string(i + 1),
                                           {{"the", 2, "det"},
                                            {subj, 3, "nsubj"},
                                            {v, 0, "root"},
                                            {"the", 5, "det"},
                                            {obj, 3, "dobj"},
                                            {".", 3, "punct"}}));
        } else {
            // "near the DISTRACTOR the SUBJ VERB the OBJ ." — a same-pool name
            // in a non-subject role, fronted so position does not give the
            // subject away.
            std::string distractor = pick(kNames, rng);
            ex.text_a =
                "near the " + distractor + " the " + subj + " " + v + " the " + obj + " .";
            parses.push_back(make_sentence(id_prefix + std::to_string(i + 1),
                                           {{"near", 6, "prep"},
                                            {"the", 3, "det"},
                                            {distractor, 1, "pobj"},
                                            {"the", 5, "det"},
                                            {subj, 6, "nsubj"},
                                            {v, 0, "root"},
                                            {"the", 8, "det"},
                                            {obj, 6, "dobj"},
                                            {".", 6, "punct"}}));
        }
        examples.push_back(std::move(ex));
    }
}

}  // namespace

ToyTask make_marker_task(size_t train_n, size_t dev_n, uint64_t seed) {
    ToyTask task;
    Rng train_rng(seed, "markertask", 0);
    Rng dev_rng(seed, "markertask", 1);
    fill_marker_task(task.train, task.train_parses, train_n, "marker-train-", train_rng);
    fill_marker_task(task.dev, task.dev_parses, dev_n, "marker-dev-", dev_rng);
    return task;
}

ToyTask make_subject_task(size_t train_n, size_t dev_n, uint64_t seed) {
    ToyTask task;
    Rng train_rng(seed, "subjecttask", 0);
    Rng dev_rng(seed, "subjecttask", 1);
    fill_subject_task(task.train, task.train_parses, train_n, "subject-train-", train_rng);
    fill_subject_task(task.dev, task.dev_parses, dev_n, "subject-dev-", dev_rng);
    return task;
}

}  // namespace dalm
