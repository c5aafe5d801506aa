#include "dalm/chunker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dalm/errors.hpp"

namespace dalm {

namespace {
using json = nlohmann::json;

const std::vector<std::string> kSvTriggers = {"nsubj", "nsubjpass", "csubj", "csubjpass"};
const std::vector<std::string> kDobjTriggers = {"dobj"};
const std::vector<std::string> kPobjTriggers = {"pobj"};
const std::vector<std::string> kCompTriggers = {"acomp", "xcomp", "ccomp", "pcomp", "attr"};

// Marks the trigger's subtree (or just trigger + direct children) in `member`.
void mark_members(const ParsedSentence& s, const ChildMap& cm, int trigger,
                  ContiguityMode mode, std::vector<char>& member) {
    member.assign(static_cast<size_t>(s.size()) + 1, 0);
    member[static_cast<size_t>(trigger)] = 1;
    if (mode == ContiguityMode::DirectChildren) {
        for (int c : cm.of(trigger)) member[static_cast<size_t>(c)] = 1;
        return;
    }
    std::vector<int> stack = {trigger};
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        for (int c : cm.of(cur)) {
            if (!member[static_cast<size_t>(c)]) {
                member[static_cast<size_t>(c)] = 1;
                stack.push_back(c);
            }
        }
    }
}

}  // namespace

const char* agreement_name(AgreementType a) {
    switch (a) {
        case AgreementType::SV: return "sv";
        case AgreementType::DOBJ: return "dobj";
        case AgreementType::POBJ: return "pobj";
        case AgreementType::COMP: return "comp";
    }
    return "?";
}

std::optional<AgreementType> agreement_from_name(std::string_view name) {
    for (AgreementType a : kAllAgreements)
        if (name == agreement_name(a)) return a;
    return std::nullopt;
}

const std::vector<std::string>& trigger_set(AgreementType a) {
    switch (a) {
        case AgreementType::SV: return kSvTriggers;
        case AgreementType::DOBJ: return kDobjTriggers;
        case AgreementType::POBJ: return kPobjTriggers;
        case AgreementType::COMP: return kCompTriggers;
    }
    return kSvTriggers;
}

std::optional<AgreementType> agreement_for_deprel(const std::string& deprel) {
    for (AgreementType a : kAllAgreements) {
        const auto& set = trigger_set(a);
        if (std::find(set.begin(), set.end(), deprel) != set.end()) return a;
    }
    return std::nullopt;
}

std::optional<AgreementChunk> extract_chunk(const ParsedSentence& s, const ChildMap& cm,
                                            int trigger_index, AgreementType a,
                                            const ChunkerOptions& opts) {
    const ParsedToken& trigger = s.token(trigger_index);
    const auto& set = trigger_set(a);
    if (std::find(set.begin(), set.end(), trigger.deprel) == set.end())
        throw std::logic_error("extract_chunk: trigger deprel '" + trigger.deprel +
                               "' not in trigger set of " + agreement_name(a));
    if (trigger.head == 0) return std::nullopt;  // no head word to end the span

    std::vector<char> member;
    mark_members(s, cm, trigger_index, opts.contiguity, member);

    int left = trigger_index;
    while (left > 1 && member[static_cast<size_t>(left - 1)]) --left;

    AgreementChunk chunk;
    chunk.agreement = a;
    chunk.sentence_id = s.id;
    chunk.trigger_index = trigger_index;
    chunk.start = std::min(left, trigger.head);
    chunk.end = std::max(trigger_index, trigger.head);
    chunk.text = s.text_span(chunk.start, chunk.end);
    return chunk;
}

std::vector<AgreementChunk> chunk_sentence(const ParsedSentence& s, const ChildMap& cm,
                                           const ChunkerOptions& opts) {
    std::vector<AgreementChunk> out;
    for (AgreementType a : kAllAgreements) {
        const auto& set = trigger_set(a);
        for (const ParsedToken& t : s.tokens) {
            if (std::find(set.begin(), set.end(), t.deprel) == set.end()) continue;
            if (auto chunk = extract_chunk(s, cm, t.index, a, opts)) out.push_back(std::move(*chunk));
        }
    }
    return out;
}

ChunkCorpusResult chunk_corpus(const std::vector<ParsedSentence>& sentences,
                               const ChunkerOptions& opts) {
    ChunkCorpusResult result;
    for (AgreementType a : kAllAgreements) result.of(a).agreement = a;
    for (const ParsedSentence& s : sentences) {
        ++result.sentences;
        ChildMap cm = children_index(s);
        for (AgreementType a : kAllAgreements) {
            const auto& set = trigger_set(a);
            for (const ParsedToken& t : s.tokens) {
                if (std::find(set.begin(), set.end(), t.deprel) == set.end()) continue;
                if (t.head == 0) {
                    ++result.root_triggers_skipped;
                    continue;
                }
                auto chunk = extract_chunk(s, cm, t.index, a, opts);
                if (chunk) result.of(a).chunks.push_back(std::move(*chunk));
            }
        }
    }
    return result;
}

int length_stats(const ChunkDataset& d, double percentile) {
    if (d.chunks.empty()) throw DataError("length_stats: empty chunk dataset");
    if (!(percentile > 0.0 && percentile <= 100.0))
        throw DataError("length_stats: percentile must be in (0, 100]");
    std::vector<int> lengths;
    lengths.reserve(d.chunks.size());
    for (const AgreementChunk& c : d.chunks) lengths.push_back(c.word_length());
    std::sort(lengths.begin(), lengths.end());
    // Smallest L with coverage count*100 >= p*n; scan cumulative counts.
    const double n = static_cast<double>(lengths.size());
    size_t count = 0;
    for (size_t i = 0; i < lengths.size(); ++i) {
        ++count;
        if (i + 1 < lengths.size() && lengths[i + 1] == lengths[i]) continue;
        if (static_cast<double>(count) * 100.0 >= percentile * n) return lengths[i];
    }
    return lengths.back();
}

void write_chunks_jsonl(const ChunkDataset& d, std::ostream& out) {
    for (const AgreementChunk& c : d.chunks) {
        json j;
        j["agreement"] = agreement_name(c.agreement);
        j["sentence_id"] = c.sentence_id;
        j["trigger_index"] = c.trigger_index;
        j["start"] = c.start;
        j["end"] = c.end;
        j["text"] = c.text;
        out << j.dump() << "\n";
    }
}

ChunkDataset read_chunks_jsonl(std::istream& in, const std::string& context_name) {
    ChunkDataset d;
    bool first = true;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(context_name + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
        }
        AgreementChunk c;
        try {
            auto a = agreement_from_name(j.at("agreement").get<std::string>());
            if (!a) throw DataError("unknown agreement name");
            c.agreement = *a;
            c.sentence_id = j.at("sentence_id").get<std::string>();
            c.trigger_index = j.at("trigger_index").get<int>();
            c.start = j.at("start").get<int>();
            c.end = j.at("end").get<int>();
            c.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(context_name + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (first) {
            d.agreement = c.agreement;
            first = false;
        } else if (c.agreement != d.agreement) {
            throw DataError(context_name + ":" + std::to_string(line_no) +
                            ": mixed agreement types in one dataset");
        }
        d.chunks.push_back(std::move(c));
    }
    return d;
}

ChunkDataset read_chunks_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open chunk dataset: " + path);
    return read_chunks_jsonl(in, path);
}

}  // namespace dalm
