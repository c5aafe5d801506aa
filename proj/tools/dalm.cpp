// dalm: dependency-agreement language model toolkit.
//
// Subcommands cover the full pipeline: ingest, chunk, stats, build-vocab,
// pretrain-stage1, pretrain-stage2, finetune, ablate, attn-dump, eval.
// Exit codes: 0 ok, 1 usage, 2 bad data, 3 numeric failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dalm/attribution.hpp"
#include "dalm/checkpoint.hpp"
#include "dalm/chunker.hpp"
#include "dalm/conllu.hpp"
#include "dalm/errors.hpp"
#include "dalm/finetune.hpp"
#include "dalm/fusion.hpp"
#include "dalm/manifest.hpp"
#include "dalm/pretrain.hpp"
#include "dalm/tokenizer.hpp"
#include "dalm/train.hpp"
#include "dalm/version.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

// Config files are flat JSON objects keyed by long flag names, e.g.
// {"steps": 300, "agreement": "sv"}. Precedence: flag > config > default.
// Applied by hand before each handler runs: keys fill exactly the options
// the command line left untouched.
void apply_json_config(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw dalm::UsageError("cannot open config file: " + path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw dalm::UsageError("config " + path + " is not valid JSON: " + e.what());
    }
    if (!root.is_object()) throw dalm::UsageError("config " + path + ": root must be a JSON object");
    for (auto it = root.begin(); it != root.end(); ++it) {
        if (it.key() == "config")
            throw dalm::UsageError("config " + path + ": 'config' cannot be set from a config file");
        CLI::Option* opt = sub->get_option_no_throw("--" + it.key());
        if (!opt)
            throw dalm::UsageError("config " + path + ": unknown key '" + it.key() + "' for '" +
                                   sub->get_name() + "'");
        if (opt->count() > 0) continue;
        if (it.value().is_array())
            for (const json& v : it.value()) opt->add_result(config_scalar(v));
        else
            opt->add_result(config_scalar(it.value()));
        opt->run_callback();
    }
}

void need(const std::string& value, const char* flag) {
    if (value.empty()) throw dalm::UsageError(std::string(flag) + " is required");
}

void need(const std::vector<std::string>& value, const char* flag) {
    if (value.empty()) throw dalm::UsageError(std::string(flag) + " is required");
}

size_t idx(dalm::AgreementType a) { return static_cast<size_t>(a); }

std::string g17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string dir_of(const std::string& path) {
    fs::path d = fs::path(path).parent_path();
    return d.empty() ? std::string(".") : d.string();
}

void ensure_parent_dir(const std::string& path) {
    fs::path d = fs::path(path).parent_path();
    if (!d.empty()) fs::create_directories(d);
}

std::ofstream open_out(const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw dalm::DataError("cannot open for writing: " + path);
    return out;
}

dalm::RunManifest start_manifest(const std::string& subcommand, uint64_t seed) {
    dalm::RunManifest man;
    man.subcommand = subcommand;
    man.seed = seed;
    man.tool_version = dalm::kVersion;
    man.started_at = dalm::now_iso8601_utc();
    return man;
}

void finish_manifest(dalm::RunManifest& man, const json& cfg, const std::string& dir) {
    man.config_json = cfg.dump();
    man.finished_at = dalm::now_iso8601_utc();
    fs::create_directories(dir);
    dalm::write_manifest(dir, man);
}

dalm::ChunkerOptions chunker_opts(const std::string& mode) {
    dalm::ChunkerOptions o;
    o.contiguity = mode == "direct" ? dalm::ContiguityMode::DirectChildren
                                    : dalm::ContiguityMode::Subtree;
    return o;
}

std::vector<dalm::ParsedSentence> load_corpus(const std::string& path, bool strict) {
    dalm::ConlluOptions opts;
    opts.strict = strict;
    dalm::ConlluResult r = dalm::parse_conllu_file(path, opts);
    for (const dalm::ConlluDiagnostic& d : r.rejected)
        std::cerr << path << ":" << d.line << ": skipped sentence: " << d.message << "\n";
    return std::move(r.sentences);
}

using MetricRows = std::vector<std::pair<std::string, double>>;

void write_metrics_csv(const std::string& path, const MetricRows& rows) {
    std::ofstream out = open_out(path);
    out << "metric,value\n";
    for (const auto& [k, v] : rows) out << k << "," << g17(v) << "\n";
}

dalm::Vocabulary load_vocab_checked(const std::string& path, int expected_size) {
    dalm::Vocabulary v = dalm::Vocabulary::load_file(path);
    if (expected_size > 0 && v.size() != expected_size)
        throw dalm::DataError("vocabulary " + path + " has " + std::to_string(v.size()) +
                              " pieces but the checkpoint expects " +
                              std::to_string(expected_size));
    return v;
}

// Finetuned checkpoints are stage-2 checkpoints plus a "cls.head" tensor; the
// stage-2 loader ignores extras, so the head is re-attached from the raw file.
void attach_cls_head(dalm::Stage2Model& m, const dalm::Checkpoint& file,
                     const std::string& path) {
    const dalm::NamedTensor* t = file.find("cls.head");
    if (!t)
        throw dalm::DataError("checkpoint has no classification head (run finetune first): " +
                              path);
    auto& p = m.reg->add("cls.head", dalm::nn::ParamKind::LinearWeight, t->shape);
    p.value.v = t->data;
}

void check_labels(const std::vector<dalm::LabeledExample>& ex, int classes,
                  const std::string& path) {
    for (size_t i = 0; i < ex.size(); ++i)
        if (ex[i].label >= classes)
            throw dalm::DataError(path + ": example " + std::to_string(i) + " has label " +
                                  std::to_string(ex[i].label) + " but --classes is " +
                                  std::to_string(classes));
}

std::optional<std::vector<dalm::ParsedSentence>> load_optional_parses(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return load_corpus(path, /*strict=*/true);
}

const std::vector<dalm::ParsedSentence>* parses_ptr(
    const std::optional<std::vector<dalm::ParsedSentence>>& p) {
    return p ? &*p : nullptr;
}

// ---------------------------------------------------------------- ingest --

struct IngestOpts {
    std::string in, out;
    std::string config;
    bool strict = false;
};

int run_ingest(const IngestOpts& o) {
    need(o.in, "--in");
    need(o.out, "--out");
    dalm::RunManifest man = start_manifest("ingest", 0);
    man.inputs = {o.in};
    dalm::ConlluOptions copts;
    copts.strict = o.strict;
    dalm::ConlluResult r = dalm::parse_conllu_file(o.in, copts);
    {
        std::ofstream out = open_out(o.out);
        dalm::serialize_conllu(r.sentences, out);
    }
    man.outputs = {o.out};
    finish_manifest(man, json{{"in", o.in}, {"out", o.out}, {"strict", o.strict}}, dir_of(o.out));
    for (const dalm::ConlluDiagnostic& d : r.rejected)
        std::cerr << o.in << ":" << d.line << ": skipped sentence: " << d.message << "\n";
    std::cout << "sentences=" << r.sentences.size() << " rejected=" << r.warning_count() << "\n";
    return 0;
}

// ----------------------------------------------------------------- chunk --

struct ChunkOpts {
    std::string in, out_dir;
    std::string config;
    std::string contiguity = "subtree";
    bool strict = false;
};

int run_chunk(const ChunkOpts& o) {
    need(o.in, "--in");
    need(o.out_dir, "--out-dir");
    dalm::RunManifest man = start_manifest("chunk", 0);
    man.inputs = {o.in};
    std::vector<dalm::ParsedSentence> corpus = load_corpus(o.in, o.strict);
    dalm::ChunkCorpusResult res = dalm::chunk_corpus(corpus, chunker_opts(o.contiguity));
    fs::create_directories(o.out_dir);
    for (dalm::AgreementType a : dalm::kAllAgreements) {
        std::string path =
            (fs::path(o.out_dir) / (std::string(dalm::agreement_name(a)) + ".jsonl")).string();
        std::ofstream out = open_out(path);
        dalm::write_chunks_jsonl(res.of(a), out);
        man.outputs.push_back(path);
        std::cout << dalm::agreement_name(a) << "=" << res.of(a).chunks.size() << "\n";
    }
    std::cout << "sentences=" << res.sentences
              << " root_triggers_skipped=" << res.root_triggers_skipped << "\n";
    finish_manifest(man,
                    json{{"in", o.in},
                         {"out-dir", o.out_dir},
                         {"contiguity", o.contiguity},
                         {"strict", o.strict}},
                    o.out_dir);
    return 0;
}

// ----------------------------------------------------------------- stats --

struct StatsOpts {
    std::vector<std::string> in;
    std::string config;
    double percentile = 95.0;
    std::string out;
};

int run_stats(const StatsOpts& o) {
    need(o.in, "--in");
    std::ostringstream csv;
    csv << "agreement,percentile,length,count\n";
    dalm::RunManifest man = start_manifest("stats", 0);
    for (const std::string& path : o.in) {
        dalm::ChunkDataset d = dalm::read_chunks_jsonl_file(path);
        man.inputs.push_back(path);
        int len = dalm::length_stats(d, o.percentile);
        csv << dalm::agreement_name(d.agreement) << "," << g17(o.percentile) << "," << len << ","
            << d.chunks.size() << "\n";
    }
    if (o.out.empty()) {
        std::cout << csv.str();
        return 0;
    }
    {
        std::ofstream out = open_out(o.out);
        out << csv.str();
    }
    std::cout << csv.str();
    man.outputs = {o.out};
    finish_manifest(man, json{{"in", o.in}, {"percentile", o.percentile}, {"out", o.out}},
                    dir_of(o.out));
    return 0;
}

// ----------------------------------------------------------- build-vocab --

struct VocabOpts {
    std::string in, out;
    std::string config;
    int size = 4096;
};

int run_build_vocab(const VocabOpts& o) {
    need(o.in, "--in");
    need(o.out, "--out");
    dalm::RunManifest man = start_manifest("build-vocab", 0);
    man.inputs = {o.in};
    dalm::Vocabulary v;
    if (fs::path(o.in).extension() == ".conllu") {
        std::vector<dalm::ParsedSentence> corpus = load_corpus(o.in, /*strict=*/false);
        std::vector<std::string> words;
        for (const dalm::ParsedSentence& s : corpus)
            for (const dalm::ParsedToken& t : s.tokens) words.push_back(t.form);
        v = dalm::build_vocab_from_words(words, o.size);
    } else {
        std::ifstream in(o.in);
        if (!in) throw dalm::DataError("cannot open: " + o.in);
        v = dalm::build_vocab(in, o.size);
    }
    {
        std::ofstream out = open_out(o.out);
        v.save(out);
    }
    man.outputs = {o.out};
    finish_manifest(man, json{{"in", o.in}, {"size", o.size}, {"out", o.out}}, dir_of(o.out));
    std::cout << "pieces=" << v.size() << "\n";
    return 0;
}

// -------------------------------------------------------- pretrain-stage1 --

struct Stage1Opts {
    std::string agreement, data, vocab, out;
    std::string config;
    long steps = 300;
    int micro_batch = 8;
    int accum = 32;
    double peak_lr = 25e-5;
    double peak_fraction = 0.5;
    double mask_rate = 0.15;
    uint64_t seed = 0;
    int threads = 1;
    int hidden = 64;
    int heads = 2;
    int ffn = 0;     // 0: 4 * hidden
    int max_len = 0; // 0: the agreement's default
};

int run_stage1(const Stage1Opts& o) {
    need(o.agreement, "--agreement");
    need(o.data, "--data");
    need(o.vocab, "--vocab");
    need(o.out, "--out");
    std::optional<dalm::AgreementType> a = dalm::agreement_from_name(o.agreement);
    if (!a) throw dalm::UsageError("unknown agreement: " + o.agreement);
    dalm::ChunkDataset data = dalm::read_chunks_jsonl_file(o.data);
    if (!data.chunks.empty() && data.agreement != *a)
        throw dalm::DataError(o.data + " holds '" +
                              std::string(dalm::agreement_name(data.agreement)) +
                              "' chunks, not '" + o.agreement + "'");
    data.agreement = *a;
    dalm::Vocabulary vocab = dalm::Vocabulary::load_file(o.vocab);

    dalm::Stage1Config cfg;
    cfg.model.layers = dalm::kSubmodelLayers;
    cfg.model.hidden_dim = o.hidden;
    cfg.model.heads = o.heads;
    cfg.model.ffn_dim = o.ffn > 0 ? o.ffn : 4 * o.hidden;
    cfg.model.max_seq_len = o.max_len > 0 ? o.max_len : dalm::default_max_length(*a);
    cfg.model.vocab_size = vocab.size();
    cfg.total_steps = o.steps;
    cfg.micro_batch = o.micro_batch;
    cfg.accumulation_target = o.accum;
    cfg.peak_lr = o.peak_lr;
    cfg.peak_fraction = o.peak_fraction;
    cfg.mask_rate = o.mask_rate;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    cfg.validate();

    dalm::RunManifest man = start_manifest("pretrain-stage1", o.seed);
    man.inputs = {o.data, o.vocab};

    dalm::nn::ParamRegistry<float> reg;
    dalm::nn::EncoderParams<float> model = dalm::nn::build_encoder(reg, cfg.model, o.seed);
    dalm::Stage1Result result = dalm::train_stage1(data, vocab, cfg, reg, model);

    ensure_parent_dir(o.out);
    dalm::write_stage1_checkpoint(o.out, result, reg);
    std::string trace_path = o.out + ".trace.csv";
    dalm::write_trace_csv_file(trace_path, result.train.trace);
    man.outputs = {o.out, trace_path};
    finish_manifest(man,
                    json{{"agreement", o.agreement},
                         {"data", o.data},
                         {"vocab", o.vocab},
                         {"out", o.out},
                         {"steps", cfg.total_steps},
                         {"micro-batch", cfg.micro_batch},
                         {"accum", cfg.accumulation_target},
                         {"peak-lr", cfg.peak_lr},
                         {"peak-fraction", cfg.peak_fraction},
                         {"mask-rate", cfg.mask_rate},
                         {"seed", cfg.seed},
                         {"threads", cfg.threads},
                         {"layers", cfg.model.layers},
                         {"hidden", cfg.model.hidden_dim},
                         {"heads", cfg.model.heads},
                         {"ffn", cfg.model.ffn_dim},
                         {"max-len", cfg.model.max_seq_len},
                         {"vocab-size", cfg.model.vocab_size}},
                    dir_of(o.out));
    std::cout << "sequences=" << result.sequences << " skipped=" << result.skipped_empty
              << " steps=" << result.train.steps_done
              << " final_loss=" << g17(result.train.final_loss)
              << " final_acc=" << g17(result.train.final_acc) << "\n";
    if (result.train.aborted) {
        std::cerr << "numeric abort: " << result.train.abort_reason
                  << " (checkpoint holds the last finite parameters)\n";
        return 3;
    }
    return 0;
}

// -------------------------------------------------------- pretrain-stage2 --

struct Stage2Opts {
    std::string corpus, submodels, vocab, out;
    std::string config;
    long steps = 500;
    int micro_batch = 8;
    int accum = 32;
    double peak_lr = 25e-5;
    double peak_fraction = 0.5;
    double mask_rate = 0.15;
    uint64_t seed = 0;
    int threads = 1;
    int layers = 14;
    int heads = 2;
    int ffn = 0;       // 0: 4 * hidden
    int max_len = 128;
    bool freeze_submodels = false;
    bool clamp_scores = false;
    bool no_fusion = false;
    bool strict = false;
    std::string contiguity = "subtree";
};

int run_stage2(const Stage2Opts& o) {
    need(o.corpus, "--corpus");
    need(o.submodels, "--submodels");
    need(o.vocab, "--vocab");
    need(o.out, "--out");
    std::array<dalm::Stage1Checkpoint, 4> subs;
    std::array<dalm::nn::ModelConfig, 4> sub_cfgs;
    std::vector<std::string> sub_paths;
    for (dalm::AgreementType a : dalm::kAllAgreements) {
        std::string p =
            (fs::path(o.submodels) / (std::string(dalm::agreement_name(a)) + ".ckpt")).string();
        dalm::Stage1Checkpoint c = dalm::load_stage1_checkpoint(p);
        if (c.agreement != a)
            throw dalm::DataError(p + " holds a '" +
                                  std::string(dalm::agreement_name(c.agreement)) +
                                  "' submodel, expected '" + dalm::agreement_name(a) + "'");
        sub_cfgs[idx(a)] = c.model;
        subs[idx(a)] = std::move(c);
        sub_paths.push_back(p);
    }
    dalm::Vocabulary vocab = load_vocab_checked(o.vocab, sub_cfgs[0].vocab_size);
    std::vector<dalm::ParsedSentence> corpus = load_corpus(o.corpus, o.strict);

    dalm::Stage2Config cfg;
    cfg.main_model.layers = o.layers;
    cfg.main_model.hidden_dim = sub_cfgs[0].hidden_dim;
    cfg.main_model.heads = o.heads;
    cfg.main_model.ffn_dim = o.ffn > 0 ? o.ffn : 4 * cfg.main_model.hidden_dim;
    cfg.main_model.max_seq_len = o.max_len;
    cfg.main_model.vocab_size = vocab.size();
    cfg.total_steps = o.steps;
    cfg.micro_batch = o.micro_batch;
    cfg.accumulation_target = o.accum;
    cfg.peak_lr = o.peak_lr;
    cfg.peak_fraction = o.peak_fraction;
    cfg.mask_rate = o.mask_rate;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    cfg.freeze_submodels = o.freeze_submodels;
    cfg.clamp_scores = o.clamp_scores;
    cfg.no_fusion = o.no_fusion;
    cfg.validate();

    dalm::RunManifest man = start_manifest("pretrain-stage2", o.seed);
    man.inputs = {o.corpus, o.vocab};
    man.inputs.insert(man.inputs.end(), sub_paths.begin(), sub_paths.end());

    dalm::Stage2Model model = dalm::build_stage2(sub_cfgs, cfg.main_model, o.seed);
    for (dalm::AgreementType a : dalm::kAllAgreements)
        dalm::load_submodel_weights(model, a, subs[idx(a)]);

    dalm::Stage2Result result =
        dalm::train_stage2(corpus, vocab, cfg, model, chunker_opts(o.contiguity));

    ensure_parent_dir(o.out);
    dalm::write_stage2_checkpoint(o.out, model, result);
    std::string trace_path = o.out + ".trace.csv";
    dalm::write_trace_csv_file(trace_path, result.train.trace);
    man.outputs = {o.out, trace_path};
    finish_manifest(man,
                    json{{"corpus", o.corpus},
                         {"submodels", o.submodels},
                         {"vocab", o.vocab},
                         {"out", o.out},
                         {"steps", cfg.total_steps},
                         {"micro-batch", cfg.micro_batch},
                         {"accum", cfg.accumulation_target},
                         {"peak-lr", cfg.peak_lr},
                         {"peak-fraction", cfg.peak_fraction},
                         {"mask-rate", cfg.mask_rate},
                         {"seed", cfg.seed},
                         {"threads", cfg.threads},
                         {"layers", cfg.main_model.layers},
                         {"hidden", cfg.main_model.hidden_dim},
                         {"heads", cfg.main_model.heads},
                         {"ffn", cfg.main_model.ffn_dim},
                         {"max-len", cfg.main_model.max_seq_len},
                         {"vocab-size", cfg.main_model.vocab_size},
                         {"freeze-submodels", cfg.freeze_submodels},
                         {"clamp-scores", cfg.clamp_scores},
                         {"no-fusion", cfg.no_fusion},
                         {"contiguity", o.contiguity},
                         {"strict", o.strict}},
                    dir_of(o.out));
    std::cout << "sequences=" << result.sequences << " skipped=" << result.skipped_empty
              << " steps=" << result.train.steps_done
              << " final_loss=" << g17(result.train.final_loss)
              << " final_acc=" << g17(result.train.final_acc) << "\n";
    if (result.train.aborted) {
        std::cerr << "numeric abort: " << result.train.abort_reason
                  << " (checkpoint holds the last finite parameters)\n";
        return 3;
    }
    return 0;
}

// -------------------------------------------------------------- finetune --

struct FinetuneOpts {
    std::string checkpoint, vocab, train, dev, out;
    std::string config;
    std::string train_parses_a, train_parses_b, dev_parses_a, dev_parses_b;
    int classes = 2;
    int epochs = 5;
    int batch_size = 16;
    double lr = 1e-4;
    uint64_t seed = 0;
    int threads = 1;
    bool train_submodels = false;
    bool train_scores = false;
    std::string contiguity = "subtree";
};

int run_finetune(const FinetuneOpts& o) {
    need(o.checkpoint, "--checkpoint");
    need(o.vocab, "--vocab");
    need(o.train, "--train");
    need(o.dev, "--dev");
    need(o.out, "--out");
    dalm::Stage2Checkpoint ck = dalm::load_stage2_checkpoint(o.checkpoint);
    dalm::Stage2Model& model = ck.model;
    dalm::Vocabulary vocab = load_vocab_checked(o.vocab, model.main.cfg.vocab_size);

    std::vector<dalm::LabeledExample> train_ex = dalm::load_examples_tsv_file(o.train);
    std::vector<dalm::LabeledExample> dev_ex = dalm::load_examples_tsv_file(o.dev);
    check_labels(train_ex, o.classes, o.train);
    check_labels(dev_ex, o.classes, o.dev);

    auto tpa = load_optional_parses(o.train_parses_a);
    auto tpb = load_optional_parses(o.train_parses_b);
    auto dpa = load_optional_parses(o.dev_parses_a);
    auto dpb = load_optional_parses(o.dev_parses_b);

    dalm::ChunkerOptions copts = chunker_opts(o.contiguity);
    std::vector<dalm::PreparedExample> train_prep =
        dalm::prepare_examples(train_ex, parses_ptr(tpa), parses_ptr(tpb), vocab, model, copts);
    std::vector<dalm::PreparedExample> dev_prep =
        dalm::prepare_examples(dev_ex, parses_ptr(dpa), parses_ptr(dpb), vocab, model, copts);

    dalm::FinetuneConfig fc;
    fc.epochs = o.epochs;
    fc.batch_size = o.batch_size;
    fc.lr = o.lr;
    fc.seed = o.seed;
    fc.threads = o.threads;
    fc.num_classes = o.classes;
    fc.train_submodels = o.train_submodels;
    fc.train_scores = o.train_scores;
    fc.validate();

    dalm::RunManifest man = start_manifest("finetune", o.seed);
    man.inputs = {o.checkpoint, o.vocab, o.train, o.dev};
    for (const std::string& p :
         {o.train_parses_a, o.train_parses_b, o.dev_parses_a, o.dev_parses_b})
        if (!p.empty()) man.inputs.push_back(p);

    dalm::FinetuneResult res = dalm::finetune(model, train_prep, dev_prep, fc);

    json h;
    h["kind"] = "stage2";
    h["finetuned"] = true;
    h["classes"] = o.classes;
    h["main"] = json::parse(dalm::model_config_to_json(model.main.cfg));
    json sub;
    for (dalm::AgreementType a : dalm::kAllAgreements)
        sub[dalm::agreement_name(a)] =
            json::parse(dalm::model_config_to_json(model.subs[idx(a)].cfg));
    h["sub"] = sub;
    h["steps"] = static_cast<long>(res.trace.size());
    h["final_loss"] = res.trace.empty() ? 0.0 : res.trace.back().loss;
    h["final_acc"] = res.best_dev_acc;
    h["aborted"] = false;
    h["best_epoch"] = res.best_epoch;
    h["best_dev_acc"] = res.best_dev_acc;
    h["tool_version"] = dalm::kVersion;
    ensure_parent_dir(o.out);
    dalm::write_checkpoint(o.out, h.dump(), dalm::snapshot_registry(*model.reg));

    std::string trace_path = o.out + ".trace.csv";
    dalm::write_trace_csv_file(trace_path, res.trace);
    std::string metrics_path = o.out + ".metrics.csv";
    MetricRows rows;
    for (size_t i = 0; i < res.dev_acc.size(); ++i)
        rows.push_back({"dev_acc_epoch" + std::to_string(i + 1), res.dev_acc[i]});
    rows.push_back({"best_dev_acc", res.best_dev_acc});
    rows.push_back({"best_epoch", static_cast<double>(res.best_epoch)});
    write_metrics_csv(metrics_path, rows);

    man.outputs = {o.out, trace_path, metrics_path};
    finish_manifest(man,
                    json{{"checkpoint", o.checkpoint},
                         {"vocab", o.vocab},
                         {"train", o.train},
                         {"dev", o.dev},
                         {"train-parses-a", o.train_parses_a},
                         {"train-parses-b", o.train_parses_b},
                         {"dev-parses-a", o.dev_parses_a},
                         {"dev-parses-b", o.dev_parses_b},
                         {"out", o.out},
                         {"classes", fc.num_classes},
                         {"epochs", fc.epochs},
                         {"batch-size", fc.batch_size},
                         {"lr", fc.lr},
                         {"seed", fc.seed},
                         {"threads", fc.threads},
                         {"train-submodels", fc.train_submodels},
                         {"train-scores", fc.train_scores},
                         {"contiguity", o.contiguity}},
                    dir_of(o.out));
    std::cout << "train=" << train_prep.size() << " dev=" << dev_prep.size()
              << " best_epoch=" << res.best_epoch << " best_dev_acc=" << g17(res.best_dev_acc)
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- ablate --

struct AblateOpts {
    std::string checkpoint, vocab, train, dev, out;
    std::string config;
    std::string train_parses_a, train_parses_b, dev_parses_a, dev_parses_b;
    std::vector<std::string> agreements;  // empty: all four
    int classes = 2;
    int epochs = 5;
    int batch_size = 16;
    double lr = 1e-4;
    uint64_t seed = 0;
    int threads = 1;
    bool train_submodels = false;
    bool train_scores = false;
    std::string contiguity = "subtree";
};

// Removal covers the whole finetuning run: the baseline and each ablated
// model are finetuned from the same pretrained checkpoint with the same
// seed, differing only in the excluded submodel.
int run_ablate(const AblateOpts& o) {
    need(o.checkpoint, "--checkpoint");
    need(o.vocab, "--vocab");
    need(o.train, "--train");
    need(o.dev, "--dev");
    need(o.out, "--out");

    std::vector<std::string> names = o.agreements;
    if (names.empty())
        for (dalm::AgreementType a : dalm::kAllAgreements) names.push_back(dalm::agreement_name(a));
    std::vector<dalm::AgreementType> removals;
    for (const std::string& name : names) {
        std::optional<dalm::AgreementType> a = dalm::agreement_from_name(name);
        if (!a) throw dalm::UsageError("unknown agreement: " + name);
        removals.push_back(*a);
    }

    dalm::Stage2Checkpoint probe = dalm::load_stage2_checkpoint(o.checkpoint);
    dalm::Vocabulary vocab = load_vocab_checked(o.vocab, probe.model.main.cfg.vocab_size);

    std::vector<dalm::LabeledExample> train_ex = dalm::load_examples_tsv_file(o.train);
    std::vector<dalm::LabeledExample> dev_ex = dalm::load_examples_tsv_file(o.dev);
    check_labels(train_ex, o.classes, o.train);
    check_labels(dev_ex, o.classes, o.dev);

    auto tpa = load_optional_parses(o.train_parses_a);
    auto tpb = load_optional_parses(o.train_parses_b);
    auto dpa = load_optional_parses(o.dev_parses_a);
    auto dpb = load_optional_parses(o.dev_parses_b);

    dalm::ChunkerOptions copts = chunker_opts(o.contiguity);
    std::vector<dalm::PreparedExample> train_prep = dalm::prepare_examples(
        train_ex, parses_ptr(tpa), parses_ptr(tpb), vocab, probe.model, copts);
    std::vector<dalm::PreparedExample> dev_prep = dalm::prepare_examples(
        dev_ex, parses_ptr(dpa), parses_ptr(dpb), vocab, probe.model, copts);

    dalm::FinetuneConfig fc;
    fc.epochs = o.epochs;
    fc.batch_size = o.batch_size;
    fc.lr = o.lr;
    fc.seed = o.seed;
    fc.threads = o.threads;
    fc.num_classes = o.classes;
    fc.train_submodels = o.train_submodels;
    fc.train_scores = o.train_scores;
    fc.validate();

    auto finetune_run = [&](int ablate_idx) {
        dalm::Stage2Checkpoint ck = dalm::load_stage2_checkpoint(o.checkpoint);
        dalm::FinetuneConfig cfg = fc;
        cfg.ablate = ablate_idx;
        dalm::FinetuneResult res = dalm::finetune(ck.model, train_prep, dev_prep, cfg);
        return res.best_dev_acc;
    };

    dalm::RunManifest man = start_manifest("ablate", o.seed);
    man.inputs = {o.checkpoint, o.vocab, o.train, o.dev};
    for (const std::string& p :
         {o.train_parses_a, o.train_parses_b, o.dev_parses_a, o.dev_parses_b})
        if (!p.empty()) man.inputs.push_back(p);

    double baseline = finetune_run(-1);
    std::vector<dalm::AblationRow> rows;
    for (dalm::AgreementType a : removals)
        rows.push_back(dalm::make_ablation_row(a, baseline, finetune_run(idx(a))));
    {
        std::ofstream out = open_out(o.out);
        dalm::write_ablation_csv(out, rows);
    }
    man.outputs = {o.out};
    finish_manifest(man,
                    json{{"checkpoint", o.checkpoint},
                         {"vocab", o.vocab},
                         {"train", o.train},
                         {"dev", o.dev},
                         {"train-parses-a", o.train_parses_a},
                         {"train-parses-b", o.train_parses_b},
                         {"dev-parses-a", o.dev_parses_a},
                         {"dev-parses-b", o.dev_parses_b},
                         {"out", o.out},
                         {"agreement", names},
                         {"classes", fc.num_classes},
                         {"epochs", fc.epochs},
                         {"batch-size", fc.batch_size},
                         {"lr", fc.lr},
                         {"seed", fc.seed},
                         {"threads", fc.threads},
                         {"train-submodels", fc.train_submodels},
                         {"train-scores", fc.train_scores},
                         {"contiguity", o.contiguity}},
                    dir_of(o.out));
    std::cout << "train=" << train_prep.size() << " dev=" << dev_prep.size()
              << " baseline_acc=" << g17(baseline) << "\n";
    for (const dalm::AblationRow& r : rows)
        std::cout << "removed=" << dalm::agreement_name(r.removed)
                  << " ablated_acc=" << g17(r.ablated_acc)
                  << " remaining_pct=" << g17(r.remaining_pct) << "\n";
    return 0;
}

// -------------------------------------------------------------- attn-dump --

struct AttnOpts {
    std::string checkpoint, vocab, sentence_file, out;
    std::string config;
    int index = 0;
    std::string contiguity = "subtree";
};

int run_attn_dump(const AttnOpts& o) {
    need(o.checkpoint, "--checkpoint");
    need(o.vocab, "--vocab");
    need(o.sentence_file, "--sentence-file");
    need(o.out, "--out");
    dalm::Stage2Checkpoint ck = dalm::load_stage2_checkpoint(o.checkpoint);
    dalm::Vocabulary vocab = load_vocab_checked(o.vocab, ck.model.main.cfg.vocab_size);
    std::vector<dalm::ParsedSentence> sentences = load_corpus(o.sentence_file, /*strict=*/true);
    if (sentences.empty()) throw dalm::DataError("no sentences in " + o.sentence_file);
    if (o.index < 0 || static_cast<size_t>(o.index) >= sentences.size())
        throw dalm::UsageError("--index " + std::to_string(o.index) + " out of range (file has " +
                               std::to_string(sentences.size()) + " sentences)");

    dalm::AttributionReport report = dalm::attention_attribution(
        ck.model, sentences[static_cast<size_t>(o.index)], vocab, chunker_opts(o.contiguity));

    std::string csv_path = fs::path(o.out).replace_extension(".csv").string();
    if (csv_path == o.out) csv_path = o.out + ".csv";
    {
        std::ofstream out = open_out(o.out);
        dalm::write_attribution_html(out, report);
    }
    {
        std::ofstream out = open_out(csv_path);
        dalm::write_attribution_csv(out, report);
    }

    dalm::RunManifest man = start_manifest("attn-dump", 0);
    man.inputs = {o.checkpoint, o.vocab, o.sentence_file};
    man.outputs = {o.out, csv_path};
    finish_manifest(man,
                    json{{"checkpoint", o.checkpoint},
                         {"vocab", o.vocab},
                         {"sentence-file", o.sentence_file},
                         {"out", o.out},
                         {"index", o.index},
                         {"contiguity", o.contiguity}},
                    dir_of(o.out));
    std::cout << "sentence=" << report.sentence_id << " tokens=" << report.tokens.size() << "\n";
    return 0;
}

// ------------------------------------------------------------------ eval --

struct EvalOpts {
    std::string checkpoint, vocab, data, corpus, eval_tsv, parses_a, parses_b, out;
    std::string config;
    double mask_rate = 0.15;
    uint64_t seed = 0;
    std::string contiguity = "subtree";
};

int run_eval(const EvalOpts& o) {
    need(o.checkpoint, "--checkpoint");
    need(o.vocab, "--vocab");
    int provided = (!o.data.empty() ? 1 : 0) + (!o.corpus.empty() ? 1 : 0) +
                   (!o.eval_tsv.empty() ? 1 : 0);
    if (provided != 1)
        throw dalm::UsageError("provide exactly one of --data, --corpus, --eval");

    dalm::Checkpoint file = dalm::read_checkpoint(o.checkpoint);
    json h;
    try {
        h = json::parse(file.header_json);
    } catch (const json::exception& e) {
        throw dalm::DataError("checkpoint: bad header JSON in " + o.checkpoint + ": " + e.what());
    }
    std::string kind = h.value("kind", "");

    dalm::RunManifest man = start_manifest("eval", o.seed);
    man.inputs = {o.checkpoint, o.vocab};
    MetricRows rows;

    if (kind == "stage1") {
        if (o.data.empty())
            throw dalm::UsageError("stage-1 checkpoints evaluate on --data chunks.jsonl");
        dalm::Stage1Checkpoint ck = dalm::load_stage1_checkpoint(o.checkpoint);
        dalm::Vocabulary vocab = load_vocab_checked(o.vocab, ck.model.vocab_size);
        dalm::ChunkDataset d = dalm::read_chunks_jsonl_file(o.data);
        if (!d.chunks.empty() && d.agreement != ck.agreement)
            throw dalm::DataError(o.data + " holds '" +
                                  std::string(dalm::agreement_name(d.agreement)) +
                                  "' chunks but the checkpoint is a '" +
                                  dalm::agreement_name(ck.agreement) + "' submodel");
        man.inputs.push_back(o.data);
        dalm::EvalResult er = dalm::mlm_eval(d, vocab, o.mask_rate, o.seed, ck.encoder);
        rows = {{"accuracy", er.accuracy},
                {"mean_loss", er.mean_loss},
                {"masked", static_cast<double>(er.masked)}};
    } else if (kind == "stage2") {
        dalm::Stage2Checkpoint ck = dalm::load_stage2_checkpoint(o.checkpoint);
        dalm::Vocabulary vocab = load_vocab_checked(o.vocab, ck.model.main.cfg.vocab_size);
        if (!o.corpus.empty()) {
            std::vector<dalm::ParsedSentence> corpus = load_corpus(o.corpus, /*strict=*/false);
            man.inputs.push_back(o.corpus);
            dalm::EvalResult er = dalm::stage2_mlm_eval(corpus, vocab, o.mask_rate, o.seed,
                                                        ck.model, chunker_opts(o.contiguity));
            rows = {{"accuracy", er.accuracy},
                    {"mean_loss", er.mean_loss},
                    {"masked", static_cast<double>(er.masked)}};
        } else if (!o.eval_tsv.empty()) {
            attach_cls_head(ck.model, file, o.checkpoint);
            std::vector<dalm::LabeledExample> ex = dalm::load_examples_tsv_file(o.eval_tsv);
            auto pa = load_optional_parses(o.parses_a);
            auto pb = load_optional_parses(o.parses_b);
            std::vector<dalm::PreparedExample> prep = dalm::prepare_examples(
                ex, parses_ptr(pa), parses_ptr(pb), vocab, ck.model, chunker_opts(o.contiguity));
            man.inputs.push_back(o.eval_tsv);
            if (!o.parses_a.empty()) man.inputs.push_back(o.parses_a);
            if (!o.parses_b.empty()) man.inputs.push_back(o.parses_b);
            rows = {{"accuracy", dalm::classify_eval(ck.model, prep, -1)},
                    {"examples", static_cast<double>(prep.size())}};
        } else {
            throw dalm::UsageError("stage-2 checkpoints evaluate on --corpus or --eval");
        }
    } else {
        throw dalm::DataError("unrecognized checkpoint kind '" + kind + "' in " + o.checkpoint);
    }

    for (const auto& [k, v] : rows) std::cout << k << "=" << g17(v) << "\n";
    if (!o.out.empty()) {
        write_metrics_csv(o.out, rows);
        man.outputs = {o.out};
        finish_manifest(man,
                        json{{"checkpoint", o.checkpoint},
                             {"vocab", o.vocab},
                             {"data", o.data},
                             {"corpus", o.corpus},
                             {"eval", o.eval_tsv},
                             {"parses-a", o.parses_a},
                             {"parses-b", o.parses_b},
                             {"out", o.out},
                             {"mask-rate", o.mask_rate},
                             {"seed", o.seed},
                             {"contiguity", o.contiguity}},
                        dir_of(o.out));
    }
    return 0;
}

// ------------------------------------------------------------------ wiring --

CLI::App* add_sub(CLI::App& app, const std::string& name, const std::string& desc,
                  std::string& config_target) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_target,
                    "JSON file with flag defaults (flag > config > built-in)");
    return sub;
}

void add_contiguity(CLI::App* sub, std::string& target) {
    sub->add_option("--contiguity", target, "chunk span rule: subtree or direct")
        ->capture_default_str()
        ->check(CLI::IsMember({"subtree", "direct"}));
}

const std::vector<std::string> kAgreementNames = {"sv", "dobj", "pobj", "comp"};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dependency-agreement language model toolkit"};
    app.set_version_flag("--version", dalm::kVersion);
    app.require_subcommand(1);
    int rc = 0;

    auto ingest = std::make_shared<IngestOpts>();
    {
        CLI::App* sub = add_sub(app, "ingest", "validate a CoNLL-U corpus and re-serialize it", ingest->config);
        sub->add_option("--in", ingest->in, "input .conllu file");
        sub->add_option("--out", ingest->out, "normalized .conllu output");
        sub->add_flag("--strict", ingest->strict, "abort on the first malformed sentence");
        sub->callback([&rc, ingest, sub] {
            apply_json_config(sub, ingest->config);
            rc = run_ingest(*ingest);
        });
    }

    auto chunk = std::make_shared<ChunkOpts>();
    {
        CLI::App* sub = add_sub(app, "chunk", "extract agreement chunks into per-type JSONL files", chunk->config);
        sub->add_option("--in", chunk->in, "input .conllu file");
        sub->add_option("--out-dir", chunk->out_dir, "directory for sv/dobj/pobj/comp.jsonl")
            ;
        add_contiguity(sub, chunk->contiguity);
        sub->add_flag("--strict", chunk->strict, "abort on the first malformed sentence");
        sub->callback([&rc, chunk, sub] {
            apply_json_config(sub, chunk->config);
            rc = run_chunk(*chunk);
        });
    }

    auto stats = std::make_shared<StatsOpts>();
    {
        CLI::App* sub = add_sub(app, "stats", "chunk length percentiles as CSV", stats->config);
        sub->add_option("--in", stats->in, "chunk JSONL file(s)")->expected(-1);
        sub->add_option("--percentile", stats->percentile, "percentile in (0,100]")
            ->capture_default_str();
        sub->add_option("--out", stats->out, "CSV output (default: stdout only)");
        sub->callback([&rc, stats, sub] {
            apply_json_config(sub, stats->config);
            rc = run_stats(*stats);
        });
    }

    auto vocab = std::make_shared<VocabOpts>();
    {
        CLI::App* sub = add_sub(app, "build-vocab", "build a subword vocabulary", vocab->config);
        sub->add_option("--in", vocab->in, "text file, or .conllu to use token forms")
            ;
        sub->add_option("--size", vocab->size, "maximum vocabulary size")->capture_default_str();
        sub->add_option("--out", vocab->out, "vocabulary file, one piece per line");
        sub->callback([&rc, vocab, sub] {
            apply_json_config(sub, vocab->config);
            rc = run_build_vocab(*vocab);
        });
    }

    auto s1 = std::make_shared<Stage1Opts>();
    {
        CLI::App* sub = add_sub(app, "pretrain-stage1", "train one agreement submodel (MLM)", s1->config);
        sub->add_option("--agreement", s1->agreement, "sv | dobj | pobj | comp")
            
            ->check(CLI::IsMember(kAgreementNames));
        sub->add_option("--data", s1->data, "chunk JSONL file");
        sub->add_option("--vocab", s1->vocab, "vocabulary file");
        sub->add_option("--out", s1->out, "checkpoint output path");
        sub->add_option("--steps", s1->steps, "optimizer steps")->capture_default_str();
        sub->add_option("--micro-batch", s1->micro_batch, "sequences per forward group")
            ->capture_default_str();
        sub->add_option("--accum", s1->accum, "sequences per optimizer step")
            ->capture_default_str();
        sub->add_option("--peak-lr", s1->peak_lr, "triangular schedule peak")
            ->capture_default_str();
        sub->add_option("--peak-fraction", s1->peak_fraction, "fraction of steps before decay")
            ->capture_default_str();
        sub->add_option("--mask-rate", s1->mask_rate, "MLM corruption rate")
            ->capture_default_str();
        sub->add_option("--seed", s1->seed, "root RNG seed")->capture_default_str();
        sub->add_option("--threads", s1->threads, "worker threads (1 = reference)")
            ->capture_default_str();
        sub->add_option("--hidden", s1->hidden, "hidden width")->capture_default_str();
        sub->add_option("--heads", s1->heads, "attention heads")->capture_default_str();
        sub->add_option("--ffn", s1->ffn, "FFN width (0: 4x hidden)")->capture_default_str();
        sub->add_option("--max-len", s1->max_len, "max input length (0: agreement default)")
            ->capture_default_str();
        sub->callback([&rc, s1, sub] {
            apply_json_config(sub, s1->config);
            rc = run_stage1(*s1);
        });
    }

    auto s2 = std::make_shared<Stage2Opts>();
    {
        CLI::App* sub = add_sub(app, "pretrain-stage2", "train the fused main model (MLM)", s2->config);
        sub->add_option("--corpus", s2->corpus, "full-sentence .conllu corpus");
        sub->add_option("--submodels", s2->submodels,
                        "directory holding sv.ckpt, dobj.ckpt, pobj.ckpt, comp.ckpt")
            ;
        sub->add_option("--vocab", s2->vocab, "vocabulary file");
        sub->add_option("--out", s2->out, "checkpoint output path");
        sub->add_option("--steps", s2->steps, "optimizer steps")->capture_default_str();
        sub->add_option("--micro-batch", s2->micro_batch, "sequences per forward group")
            ->capture_default_str();
        sub->add_option("--accum", s2->accum, "sequences per optimizer step")
            ->capture_default_str();
        sub->add_option("--peak-lr", s2->peak_lr, "triangular schedule peak")
            ->capture_default_str();
        sub->add_option("--peak-fraction", s2->peak_fraction, "fraction of steps before decay")
            ->capture_default_str();
        sub->add_option("--mask-rate", s2->mask_rate, "MLM corruption rate")
            ->capture_default_str();
        sub->add_option("--seed", s2->seed, "root RNG seed")->capture_default_str();
        sub->add_option("--threads", s2->threads, "worker threads (1 = reference)")
            ->capture_default_str();
        sub->add_option("--layers", s2->layers, "main encoder depth")->capture_default_str();
        sub->add_option("--heads", s2->heads, "main attention heads")->capture_default_str();
        sub->add_option("--ffn", s2->ffn, "main FFN width (0: 4x hidden)")
            ->capture_default_str();
        sub->add_option("--max-len", s2->max_len, "main max input length")
            ->capture_default_str();
        sub->add_flag("--freeze-submodels", s2->freeze_submodels,
                      "do not update submodel weights");
        sub->add_flag("--clamp-scores", s2->clamp_scores, "pin agreement scores to 0 (frozen)");
        sub->add_flag("--no-fusion", s2->no_fusion, "drop the fusion path from the graph");
        add_contiguity(sub, s2->contiguity);
        sub->add_flag("--strict", s2->strict, "abort on the first malformed sentence");
        sub->callback([&rc, s2, sub] {
            apply_json_config(sub, s2->config);
            rc = run_stage2(*s2);
        });
    }

    auto ft = std::make_shared<FinetuneOpts>();
    {
        CLI::App* sub = add_sub(app, "finetune", "train a classifier head on a stage-2 model", ft->config);
        sub->add_option("--checkpoint", ft->checkpoint, "stage-2 checkpoint");
        sub->add_option("--vocab", ft->vocab, "vocabulary file");
        sub->add_option("--train", ft->train, "training TSV");
        sub->add_option("--dev", ft->dev, "development TSV");
        sub->add_option("--out", ft->out, "finetuned checkpoint output path");
        sub->add_option("--train-parses-a", ft->train_parses_a,
                        ".conllu parses for the training text_a column");
        sub->add_option("--train-parses-b", ft->train_parses_b,
                        ".conllu parses for the training text_b column");
        sub->add_option("--dev-parses-a", ft->dev_parses_a,
                        ".conllu parses for the dev text_a column");
        sub->add_option("--dev-parses-b", ft->dev_parses_b,
                        ".conllu parses for the dev text_b column");
        sub->add_option("--classes", ft->classes, "number of labels")->capture_default_str();
        sub->add_option("--epochs", ft->epochs, "training epochs")->capture_default_str();
        sub->add_option("--batch-size", ft->batch_size, "examples per optimizer step")
            ->capture_default_str();
        sub->add_option("--lr", ft->lr, "initial learning rate (cosine-decayed)")
            ->capture_default_str();
        sub->add_option("--seed", ft->seed, "root RNG seed")->capture_default_str();
        sub->add_option("--threads", ft->threads, "worker threads (1 = reference)")
            ->capture_default_str();
        sub->add_flag("--train-submodels", ft->train_submodels, "unfreeze submodel weights");
        sub->add_flag("--train-scores", ft->train_scores, "unfreeze agreement scores");
        add_contiguity(sub, ft->contiguity);
        sub->callback([&rc, ft, sub] {
            apply_json_config(sub, ft->config);
            rc = run_finetune(*ft);
        });
    }

    auto ab = std::make_shared<AblateOpts>();
    {
        CLI::App* sub = add_sub(app, "ablate", "re-finetune with single submodels removed", ab->config);
        sub->add_option("--checkpoint", ab->checkpoint, "stage-2 checkpoint to finetune from");
        sub->add_option("--vocab", ab->vocab, "vocabulary file");
        sub->add_option("--train", ab->train, "training TSV");
        sub->add_option("--dev", ab->dev, "development TSV");
        sub->add_option("--train-parses-a", ab->train_parses_a, ".conllu parses for train text_a");
        sub->add_option("--train-parses-b", ab->train_parses_b, ".conllu parses for train text_b");
        sub->add_option("--dev-parses-a", ab->dev_parses_a, ".conllu parses for dev text_a");
        sub->add_option("--dev-parses-b", ab->dev_parses_b, ".conllu parses for dev text_b");
        sub->add_option("--out", ab->out, "ablation CSV output path");
        sub->add_option("--agreement", ab->agreements, "agreement(s) to remove (default: all)")
            ->check(CLI::IsMember(kAgreementNames));
        sub->add_option("--classes", ab->classes, "number of labels")->capture_default_str();
        sub->add_option("--epochs", ab->epochs, "training epochs per run")->capture_default_str();
        sub->add_option("--batch-size", ab->batch_size, "examples per optimizer step")
            ->capture_default_str();
        sub->add_option("--lr", ab->lr, "initial learning rate (cosine-decayed)")
            ->capture_default_str();
        sub->add_option("--seed", ab->seed, "root RNG seed (shared by all runs)")
            ->capture_default_str();
        sub->add_option("--threads", ab->threads, "worker threads (1 = reference)")
            ->capture_default_str();
        sub->add_flag("--train-submodels", ab->train_submodels, "unfreeze submodel weights");
        sub->add_flag("--train-scores", ab->train_scores, "unfreeze agreement scores");
        add_contiguity(sub, ab->contiguity);
        sub->callback([&rc, ab, sub] {
            apply_json_config(sub, ab->config);
            rc = run_ablate(*ab);
        });
    }

    auto at = std::make_shared<AttnOpts>();
    {
        CLI::App* sub = add_sub(app, "attn-dump", "per-token attention attribution report", at->config);
        sub->add_option("--checkpoint", at->checkpoint, "stage-2 checkpoint");
        sub->add_option("--vocab", at->vocab, "vocabulary file");
        sub->add_option("--sentence-file", at->sentence_file, ".conllu file with the sentence")
            ;
        sub->add_option("--out", at->out, "HTML report path (CSV written alongside)")
            ;
        sub->add_option("--index", at->index, "sentence index within the file")
            ->capture_default_str();
        add_contiguity(sub, at->contiguity);
        sub->callback([&rc, at, sub] {
            apply_json_config(sub, at->config);
            rc = run_attn_dump(*at);
        });
    }

    auto ev = std::make_shared<EvalOpts>();
    {
        CLI::App* sub = add_sub(app, "eval", "evaluate a checkpoint; writes metric,value CSV", ev->config);
        sub->add_option("--checkpoint", ev->checkpoint, "stage-1, stage-2, or finetuned")
            ;
        sub->add_option("--vocab", ev->vocab, "vocabulary file");
        sub->add_option("--data", ev->data, "chunk JSONL (stage-1 MLM eval)");
        sub->add_option("--corpus", ev->corpus, ".conllu corpus (stage-2 MLM eval)");
        sub->add_option("--eval", ev->eval_tsv, "TSV (classification eval, needs cls head)");
        sub->add_option("--parses-a", ev->parses_a, ".conllu parses for text_a");
        sub->add_option("--parses-b", ev->parses_b, ".conllu parses for text_b");
        sub->add_option("--out", ev->out, "metrics CSV output path");
        sub->add_option("--mask-rate", ev->mask_rate, "MLM corruption rate")
            ->capture_default_str();
        sub->add_option("--seed", ev->seed, "masking stream seed")->capture_default_str();
        add_contiguity(sub, ev->contiguity);
        sub->callback([&rc, ev, sub] {
            apply_json_config(sub, ev->config);
            rc = run_eval(*ev);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const dalm::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dalm::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dalm::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
