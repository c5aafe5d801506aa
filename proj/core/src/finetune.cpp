#include "dalm/finetune.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "dalm/errors.hpp"
#include "dalm/schedule.hpp"

namespace dalm {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream is(text);
    std::string w;
    while (is >> w) words.push_back(w);
    return words;
}

}  // namespace

std::vector<LabeledExample> load_examples_tsv(std::istream& in, const std::string& context_name) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(context_name + ": empty task file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_tabs(line);

    bool has_b = false;
    if (header.size() == 2 && header[0] == "text_a" && header[1] == "label") {
        has_b = false;
    } else if (header.size() == 3 && header[0] == "text_a" && header[1] == "text_b" &&
               header[2] == "label") {
        has_b = true;
    } else {
        throw DataError(context_name +
                        ": header must be 'text_a<TAB>label' or 'text_a<TAB>text_b<TAB>label'");
    }

    std::vector<LabeledExample> out;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != header.size())
            throw DataError(context_name + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(header.size()) + " columns, found " +
                            std::to_string(cols.size()));
        LabeledExample ex;
        ex.text_a = cols[0];
        ex.has_b = has_b;
        if (has_b) ex.text_b = cols[1];
        const std::string& label = cols.back();
        try {
            size_t used = 0;
            ex.label = std::stoi(label, &used);
            if (used != label.size()) throw std::invalid_argument(label);
        } catch (const std::exception&) {
            throw DataError(context_name + ":" + std::to_string(line_no) +
                            ": label is not an integer: '" + label + "'");
        }
        if (ex.label < 0)
            throw DataError(context_name + ":" + std::to_string(line_no) + ": negative label");
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<LabeledExample> load_examples_tsv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open task file: " + path);
    return load_examples_tsv(in, path);
}

PairEncoding encode_pair(const Vocabulary& vocab, const std::string& text_a,
                         const std::string& text_b, bool has_b, int max_len) {
    const int min_len = has_b ? 3 : 2;  // [CLS] [SEP] ([SEP])
    if (max_len < min_len) throw DataError("encode_pair: max_len too small for the specials");

    // Encode each side unconstrained, then trim from the end of b, then a.
    const int unbounded = 1 << 20;
    TokenIdSequence ea = encode(vocab, text_a, unbounded, false);
    TokenIdSequence eb;
    if (has_b) eb = encode(vocab, text_b, unbounded, false);

    long keep_a = static_cast<long>(ea.ids.size());
    long keep_b = static_cast<long>(eb.ids.size());
    const long budget = max_len - min_len;
    if (keep_a + keep_b > budget) {
        keep_b = std::min(keep_b, std::max(long{0}, budget - keep_a));
        keep_a = std::min(keep_a, budget);
    }

    PairEncoding out;
    out.ids.push_back(Vocabulary::kCls);
    const int off_a = static_cast<int>(out.ids.size());
    out.ids.insert(out.ids.end(), ea.ids.begin(), ea.ids.begin() + keep_a);
    out.ids.push_back(Vocabulary::kSep);
    for (WordSpan s : ea.word_spans) {
        s.begin = std::min<int>(s.begin, static_cast<int>(keep_a)) + off_a;
        s.end = std::min<int>(s.end, static_cast<int>(keep_a)) + off_a;
        out.spans_a.push_back(s);
    }
    if (has_b) {
        const int off_b = static_cast<int>(out.ids.size());
        out.ids.insert(out.ids.end(), eb.ids.begin(), eb.ids.begin() + keep_b);
        out.ids.push_back(Vocabulary::kSep);
        for (WordSpan s : eb.word_spans) {
            s.begin = std::min<int>(s.begin, static_cast<int>(keep_b)) + off_b;
            s.end = std::min<int>(s.end, static_cast<int>(keep_b)) + off_b;
            out.spans_b.push_back(s);
        }
    }
    return out;
}

namespace {

void check_parse_matches(const ParsedSentence& parse, const std::string& text, size_t example_ix,
                         const char* side) {
    std::vector<std::string> words = split_words(text);
    if (static_cast<size_t>(parse.size()) != words.size())
        throw DataError("finetune: example " + std::to_string(example_ix) + " " + side +
                        ": parse has " + std::to_string(parse.size()) + " tokens, text has " +
                        std::to_string(words.size()) + " words");
    for (size_t i = 0; i < words.size(); ++i) {
        if (lower(parse.tokens[i].form) != lower(words[i]))
            throw DataError("finetune: example " + std::to_string(example_ix) + " " + side +
                            ": parse form '" + parse.tokens[i].form + "' != text word '" +
                            words[i] + "' at position " + std::to_string(i + 1));
    }
}

void add_side_chunks(PreparedSentence& ps, const ParsedSentence& parse,
                     const std::vector<TokenId>& pair_ids, const std::vector<WordSpan>& spans,
                     const Vocabulary& vocab, const Stage2Model& m, const ChunkerOptions& copts) {
    TokenIdSequence as_seq;
    as_seq.ids = pair_ids;
    as_seq.word_spans = spans;
    ChildMap cm = children_index(parse);
    for (const AgreementChunk& c : chunk_sentence(parse, cm, copts)) {
        PreparedChunk pc = align_chunk(c, as_seq, vocab, m.sub_max_len(c.agreement), parse.id);
        if (pc.target_positions.empty()) continue;
        ps.chunks.push_back(std::move(pc));
    }
}

}  // namespace

std::vector<PreparedExample> prepare_examples(
    const std::vector<LabeledExample>& examples, const std::vector<ParsedSentence>* parses_a,
    const std::vector<ParsedSentence>* parses_b, const Vocabulary& vocab, const Stage2Model& m,
    const ChunkerOptions& copts) {
    if (parses_a && parses_a->size() != examples.size())
        throw DataError("finetune: parses for text_a count " + std::to_string(parses_a->size()) +
                        " != example count " + std::to_string(examples.size()));
    if (parses_b && parses_b->size() != examples.size())
        throw DataError("finetune: parses for text_b count " + std::to_string(parses_b->size()) +
                        " != example count " + std::to_string(examples.size()));

    std::vector<PreparedExample> out;
    out.reserve(examples.size());
    for (size_t i = 0; i < examples.size(); ++i) {
        const LabeledExample& ex = examples[i];
        PairEncoding pe =
            encode_pair(vocab, ex.text_a, ex.text_b, ex.has_b, m.main.cfg.max_seq_len);
        PreparedExample pex;
        pex.label = ex.label;
        pex.sentence.id = "example-" + std::to_string(i);
        pex.sentence.ids = pe.ids;
        if (parses_a) {
            check_parse_matches((*parses_a)[i], ex.text_a, i, "text_a");
            add_side_chunks(pex.sentence, (*parses_a)[i], pe.ids, pe.spans_a, vocab, m, copts);
        }
        if (parses_b && ex.has_b) {
            check_parse_matches((*parses_b)[i], ex.text_b, i, "text_b");
            add_side_chunks(pex.sentence, (*parses_b)[i], pe.ids, pe.spans_b, vocab, m, copts);
        }
        out.push_back(std::move(pex));
    }
    return out;
}

void FinetuneConfig::validate() const {
    if (epochs < 0) throw DataError("finetune: epochs must be >= 0");
    if (batch_size < 1) throw DataError("finetune: batch_size must be >= 1");
    if (!(lr > 0.0)) throw DataError("finetune: lr must be > 0");
    if (num_classes < 2) throw DataError("finetune: num_classes must be >= 2");
    if (threads < 1) throw DataError("finetune: threads must be >= 1");
    if (ablate < -1 || ablate > 3) throw DataError("finetune: ablate must be -1..3");
}

namespace {

struct ClassOutcome {
    double loss = 0;
    bool correct = false;
};

ClassOutcome class_sequence(Stage2Model& m, nn::Parameter<float>& head,
                            const PreparedExample& ex, int ablate, nn::GradSink<float>* sink) {
    nn::Tape<float> t;
    Stage2Forward f = stage2_forward(t, m, ex.sentence, ex.sentence.ids, false, ablate);
    auto cls = t.select_rows(f.hidden, {0});
    auto logits = t.matmul(cls, t.param(head));
    auto ce = t.masked_ce_sum(logits, {ex.label}, {1});
    if (sink) t.backward(ce.loss_sum, 1.0f, sink);
    ClassOutcome o;
    o.loss = static_cast<double>(t.val(ce.loss_sum).v[0]);
    o.correct = ce.correct == 1;
    return o;
}

double eval_examples(Stage2Model& m, nn::Parameter<float>& head,
                     const std::vector<PreparedExample>& examples, int ablate) {
    if (examples.empty()) throw DataError("finetune: no examples to evaluate");
    long correct = 0;
    for (const PreparedExample& ex : examples)
        correct += class_sequence(m, head, ex, ablate, nullptr).correct;
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace

FinetuneResult finetune(Stage2Model& m, const std::vector<PreparedExample>& train,
                        const std::vector<PreparedExample>& dev, const FinetuneConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw DataError("finetune: no training examples");
    if (dev.empty()) throw DataError("finetune: no dev examples");
    for (const auto& set : {&train, &dev})
        for (const PreparedExample& ex : *set)
            if (ex.label >= cfg.num_classes)
                throw DataError("finetune: label " + std::to_string(ex.label) +
                                " exceeds num_classes " + std::to_string(cfg.num_classes));

    // Scores and submodels stay frozen unless explicitly unfrozen; the
    // ablated agreement is structurally removed and its score pinned to 0.
    for (AgreementType a : kAllAgreements) {
        nn::Parameter<float>* s = m.scores[static_cast<size_t>(a)];
        s->trainable = cfg.train_scores;
        for (nn::Parameter<float>* p : m.subs[static_cast<size_t>(a)].all())
            p->trainable = cfg.train_submodels;
    }
    if (cfg.ablate >= 0) {
        nn::Parameter<float>* s = m.scores[static_cast<size_t>(cfg.ablate)];
        s->value.v[0] = 0.0f;
        s->trainable = false;
    }

    nn::Parameter<float>* head = m.reg->find("cls.head");
    if (!head) {
        head = &m.reg->add("cls.head", nn::ParamKind::LinearWeight,
                           {m.main.cfg.hidden_dim, cfg.num_classes});
    } else if (head->value.shape !=
               std::vector<long>{m.main.cfg.hidden_dim, cfg.num_classes}) {
        throw DataError("finetune: existing classifier head has a different class count");
    }
    nn::init_normal(*head, cfg.seed);
    head->trainable = true;

    FinetuneResult result;
    if (cfg.epochs == 0) {
        result.best_dev_acc = eval_examples(m, *head, dev, cfg.ablate);
        result.dev_acc = {};
        result.best_epoch = 0;
        return result;
    }

    nn::AdamW<float> opt(*m.reg, cfg.adamw);
    const long steps_per_epoch =
        (static_cast<long>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = steps_per_epoch * cfg.epochs;

    auto snapshot = [&]() {
        std::vector<std::vector<float>> vals;
        vals.reserve(m.reg->size());
        for (const auto& p : *m.reg) vals.push_back(p->value.v);
        return vals;
    };
    std::vector<std::vector<float>> best_params;

    long global_step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng r(cfg.seed, "order", static_cast<uint64_t>(epoch));
        r.shuffle(order);

        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
            const size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.batch_size));
            const size_t n = b1 - b0;

            const int workers =
                static_cast<int>(std::min<size_t>(static_cast<size_t>(cfg.threads), n));
            std::vector<nn::GradSink<float>> sinks(static_cast<size_t>(workers));
            std::vector<double> losses(static_cast<size_t>(workers), 0.0);
            std::vector<long> corrects(static_cast<size_t>(workers), 0);
            std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

            auto run_block = [&](int w) {
                const size_t lo = b0 + n * static_cast<size_t>(w) / static_cast<size_t>(workers);
                const size_t hi =
                    b0 + n * static_cast<size_t>(w + 1) / static_cast<size_t>(workers);
                try {
                    for (size_t i = lo; i < hi; ++i) {
                        ClassOutcome o = class_sequence(m, *head, train[order[i]], cfg.ablate,
                                                        &sinks[static_cast<size_t>(w)]);
                        losses[static_cast<size_t>(w)] += o.loss;
                        corrects[static_cast<size_t>(w)] += o.correct;
                    }
                } catch (...) {
                    errors[static_cast<size_t>(w)] = std::current_exception();
                }
            };
            if (workers == 1) {
                run_block(0);
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < workers; ++w) pool.emplace_back(run_block, w);
                for (auto& th : pool) th.join();
            }
            for (const auto& e : errors)
                if (e) std::rethrow_exception(e);

            m.reg->zero_grads();
            for (auto& s : sinks) s.reduce_into(*m.reg);
            const float inv = 1.0f / static_cast<float>(n);
            for (auto& p : *m.reg) {
                if (!p->trainable) continue;
                for (float& g : p->grad.v) g *= inv;
            }
            const double lr = cosine_lr(global_step, total_steps, cfg.lr);
            opt.step(lr);

            double loss = 0;
            long correct = 0;
            for (int w = 0; w < workers; ++w) {
                loss += losses[static_cast<size_t>(w)];
                correct += corrects[static_cast<size_t>(w)];
            }
            TraceRow row;
            row.step = ++global_step;
            row.lr = lr;
            row.loss = loss / static_cast<double>(n);
            row.acc = static_cast<double>(correct) / static_cast<double>(n);
            result.trace.push_back(row);
        }

        const double acc = eval_examples(m, *head, dev, cfg.ablate);
        result.dev_acc.push_back(acc);
        if (acc > result.best_dev_acc || result.best_epoch == 0) {
            result.best_dev_acc = acc;
            result.best_epoch = epoch;
            best_params = snapshot();
        }
    }

    for (size_t i = 0; i < m.reg->size(); ++i) (*m.reg)[i].value.v = best_params[i];
    return result;
}

double classify_eval(Stage2Model& m, const std::vector<PreparedExample>& examples, int ablate) {
    nn::Parameter<float>* head = m.reg->find("cls.head");
    if (!head) throw DataError("classify_eval: model has no classifier head");
    return eval_examples(m, *head, examples, ablate);
}

AblationRow make_ablation_row(AgreementType removed, double baseline_acc, double ablated_acc) {
    AblationRow row;
    row.removed = removed;
    row.baseline_acc = baseline_acc;
    row.ablated_acc = ablated_acc;
    if (baseline_acc <= 0.0)
        throw DataError("ablation: baseline accuracy must be positive");
    row.remaining_pct = 100.0 * ablated_acc / baseline_acc;
    return row;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "removed,baseline_acc,ablated_acc,remaining_pct\n";
    char buf[160];
    for (const AblationRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", agreement_name(r.removed),
                      r.baseline_acc, r.ablated_acc, r.remaining_pct);
        out << buf;
    }
}

}  // namespace dalm
