#include "dalm/attribution.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "dalm/errors.hpp"

namespace dalm {

namespace {

// Mean attention received per key position in the final layer: averaged over
// heads and over non-special query rows. Specials receive no score.
std::vector<double> attention_received(const nn::AttnTrace<float>& trace,
                                       const std::vector<TokenId>& ids, const Vocabulary& vocab,
                                       int heads) {
    if (trace.layers.empty()) throw DataError("attribution: submodel produced no attention");
    const nn::Tensor<float>& probs = trace.layers.back();
    const long seq = static_cast<long>(ids.size());

    std::vector<long> queries;
    for (long i = 0; i < seq; ++i)
        if (!vocab.is_special(ids[static_cast<size_t>(i)])) queries.push_back(i);
    if (queries.empty()) return std::vector<double>(static_cast<size_t>(seq), 0.0);

    std::vector<double> received(static_cast<size_t>(seq), 0.0);
    for (int h = 0; h < heads; ++h)
        for (long q : queries)
            for (long j = 0; j < seq; ++j)
                received[static_cast<size_t>(j)] +=
                    static_cast<double>(probs.at(h * seq + q, j));
    const double norm = 1.0 / (static_cast<double>(heads) * static_cast<double>(queries.size()));
    for (long j = 0; j < seq; ++j) {
        received[static_cast<size_t>(j)] *=
            vocab.is_special(ids[static_cast<size_t>(j)]) ? 0.0 : norm;
    }
    return received;
}

void html_escape(std::ostream& out, const std::string& s) {
    for (char c : s) {
        switch (c) {
            case '&': out << "&amp;"; break;
            case '<': out << "&lt;"; break;
            case '>': out << "&gt;"; break;
            case '"': out << "&quot;"; break;
            default: out << c;
        }
    }
}

}  // namespace

AttributionReport attention_attribution(Stage2Model& m, const ParsedSentence& s,
                                        const Vocabulary& vocab, const ChunkerOptions& copts) {
    AttributionReport report;
    report.sentence_id = s.id;
    for (const ParsedToken& t : s.tokens) report.tokens.push_back(t.form);
    for (auto& row : report.scores) row.assign(report.tokens.size(), 0.0);

    ChildMap cm = children_index(s);
    for (const AgreementChunk& c : chunk_sentence(s, cm, copts)) {
        const size_t a = static_cast<size_t>(c.agreement);
        nn::EncoderParams<float>& sub = m.subs[a];
        TokenIdSequence enc = encode(vocab, c.text, sub.cfg.max_seq_len, true);

        nn::Tape<float> t;
        nn::AttnTrace<float> trace;
        auto x = nn::embed_input(t, sub, enc.ids);
        std::vector<uint8_t> ones(enc.ids.size(), 1);
        nn::encoder_forward(t, sub, x, ones, nullptr, &trace);

        std::vector<double> received = attention_received(trace, enc.ids, vocab, sub.cfg.heads);

        // Chunk word w is sentence word (start - 1 + w); a word's score is the
        // sum over its surviving pieces.
        for (size_t w = 0; w < enc.word_spans.size(); ++w) {
            const WordSpan& span = enc.word_spans[w];
            double sum = 0;
            for (int p = span.begin; p < span.end; ++p) sum += received[static_cast<size_t>(p)];
            const size_t token_ix = static_cast<size_t>(c.start - 1) + w;
            if (token_ix < report.tokens.size()) report.scores[a][token_ix] += sum;
        }
        report.chunks[a].push_back(c);
    }

    for (auto& row : report.scores) {
        double mx = 0;
        for (double v : row) mx = std::max(mx, v);
        if (mx > 0)
            for (double& v : row) v /= mx;
    }
    return report;
}

void write_attribution_csv(std::ostream& out, const AttributionReport& report) {
    out << "token,agreement,score\n";
    char buf[64];
    for (size_t i = 0; i < report.tokens.size(); ++i) {
        for (AgreementType a : kAllAgreements) {
            std::snprintf(buf, sizeof(buf), "%.17g",
                          report.scores[static_cast<size_t>(a)][i]);
            out << report.tokens[i] << ',' << agreement_name(a) << ',' << buf << '\n';
        }
    }
}

void write_attribution_html(std::ostream& out, const AttributionReport& report) {
    out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
        << "<title>agreement attribution</title>\n"
        << "<style>body{font-family:sans-serif} .tok{padding:2px 4px;margin:1px;"
        << "display:inline-block;border-radius:3px} th{text-align:left;padding-right:8px}"
        << "</style></head><body>\n<h1>agreement attribution</h1>\n<p>sentence ";
    html_escape(out, report.sentence_id);
    out << "</p>\n<table>\n";
    for (AgreementType a : kAllAgreements) {
        out << "<tr><th>" << agreement_name(a) << "</th><td>";
        for (size_t i = 0; i < report.tokens.size(); ++i) {
            double v = report.scores[static_cast<size_t>(a)][i];
            v = std::clamp(v, 0.0, 1.0);
            char style[96];
            std::snprintf(style, sizeof(style), "background:rgba(178,34,34,%.3f)", v);
            out << "<span class=\"tok\" style=\"" << style << "\">";
            html_escape(out, report.tokens[i]);
            out << "</span>";
        }
        out << "</td></tr>\n";
    }
    out << "</table>\n</body></html>\n";
}

}  // namespace dalm
