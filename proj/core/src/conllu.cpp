#include "dalm/conllu.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dalm/errors.hpp"

namespace dalm {

namespace {

std::string lowercased(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    size_t start = 0;
    while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return cols;
}

// "i-j" multiword ranges and "i.j" empty nodes carry no head/deprel we need.
bool is_skippable_id(std::string_view id) {
    return id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos;
}

}  // namespace

std::string ParsedSentence::text_span(int start, int end) const {
    std::string out;
    for (int i = start; i <= end; ++i) {
        if (i > start) out += ' ';
        out += token(i).form;
    }
    return out;
}

ChildMap children_index(const ParsedSentence& s) {
    ChildMap cm;
    cm.children.resize(static_cast<size_t>(s.size()));
    for (const ParsedToken& t : s.tokens) {
        if (t.head > 0) cm.children[static_cast<size_t>(t.head - 1)].push_back(t.index);
    }
    // Tokens are visited in ascending index order, so lists are already sorted.
    return cm;
}

std::string validate_sentence(const ParsedSentence& s) {
    const int n = s.size();
    if (n == 0) return "sentence has no tokens";
    for (int i = 0; i < n; ++i) {
        const ParsedToken& t = s.tokens[static_cast<size_t>(i)];
        if (t.index != i + 1)
            return "token ids are not contiguous 1..n (found " + std::to_string(t.index) +
                   " at position " + std::to_string(i + 1) + ")";
        if (t.head < 0 || t.head > n)
            return "head " + std::to_string(t.head) + " out of range 0.." + std::to_string(n);
        if (t.head == t.index) return "token " + std::to_string(t.index) + " is its own head";
        if (t.deprel.empty()) return "token " + std::to_string(t.index) + " has empty deprel";
    }
    bool has_root = false;
    for (const ParsedToken& t : s.tokens) has_root |= (t.head == 0);
    if (!has_root) return "no token attaches to root";
    // Every head chain must reach 0 within n steps.
    for (const ParsedToken& t : s.tokens) {
        int cur = t.index;
        for (int steps = 0; cur != 0; ++steps) {
            if (steps > n) return "cyclic head links reachable from token " + std::to_string(t.index);
            cur = s.token(cur).head;
        }
    }
    return {};
}

ConlluResult parse_conllu(std::istream& in, const ConlluOptions& opts) {
    ConlluResult result;
    std::string line;
    size_t line_no = 0;
    size_t running_id = 0;

    ParsedSentence current;
    std::string pending_error;
    size_t pending_error_line = 0;
    bool saw_content = false;

    auto flush = [&]() {
        if (!saw_content) {
            current = {};
            return;
        }
        std::string err = pending_error;
        size_t err_line = pending_error_line;
        if (err.empty()) {
            err = validate_sentence(current);
        }
        if (current.id.empty()) current.id = "s" + std::to_string(++running_id);
        else ++running_id;
        if (err.empty()) {
            result.sentences.push_back(std::move(current));
        } else {
            if (opts.strict)
                throw DataError("conllu: sentence '" + current.id + "' rejected: " + err +
                                (err_line ? " (line " + std::to_string(err_line) + ")" : ""));
            result.rejected.push_back({err_line, current.id, err});
        }
        current = {};
        pending_error.clear();
        pending_error_line = 0;
        saw_content = false;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') {
            saw_content = true;
            // "# sent_id = xyz" (or "# sent_id: xyz") names the sentence.
            std::string_view sv(line);
            sv.remove_prefix(1);
            while (!sv.empty() && sv.front() == ' ') sv.remove_prefix(1);
            if (sv.substr(0, 7) == "sent_id") {
                sv.remove_prefix(7);
                while (!sv.empty() && (sv.front() == ' ' || sv.front() == '=' || sv.front() == ':'))
                    sv.remove_prefix(1);
                if (!sv.empty()) current.id = std::string(sv);
            }
            continue;
        }
        saw_content = true;
        if (!pending_error.empty()) continue;  // sentence already doomed; scan to blank line

        std::vector<std::string_view> cols = split_tabs(line);
        if (cols.size() != 10) {
            pending_error = "expected 10 tab-separated columns, got " + std::to_string(cols.size());
            pending_error_line = line_no;
            continue;
        }
        if (is_skippable_id(cols[0])) continue;

        ParsedToken tok;
        if (!parse_int(cols[0], tok.index)) {
            pending_error = "non-integer ID column '" + std::string(cols[0]) + "'";
            pending_error_line = line_no;
            continue;
        }
        tok.form = std::string(cols[1]);
        if (!parse_int(cols[6], tok.head)) {
            pending_error = "non-integer HEAD column '" + std::string(cols[6]) + "'";
            pending_error_line = line_no;
            continue;
        }
        tok.deprel = lowercased(std::string(cols[7]));
        current.tokens.push_back(std::move(tok));
    }
    flush();
    return result;
}

ConlluResult parse_conllu_file(const std::string& path, const ConlluOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CoNLL-U file: " + path);
    return parse_conllu(in, opts);
}

void serialize_conllu(const std::vector<ParsedSentence>& sentences, std::ostream& out) {
    for (const ParsedSentence& s : sentences) {
        out << "# sent_id = " << s.id << "\n";
        for (const ParsedToken& t : s.tokens) {
            out << t.index << '\t' << t.form << "\t_\t_\t_\t_\t" << t.head << '\t' << t.deprel
                << "\t_\t_\n";
        }
        out << "\n";
    }
}

}  // namespace dalm
