#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dalm/errors.hpp"
#include "dalm/finetune.hpp"
#include "dalm/schedule.hpp"
#include "dalm/synth.hpp"
#include "dalm/tokenizer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using dalm::AgreementType;
using dalm::LabeledExample;
using dalm::Stage2Model;
using dalm::Vocabulary;
namespace nn = dalm::nn;

namespace {

Vocabulary words_vocab(const std::vector<std::string>& pieces) {
    Vocabulary v;
    for (const std::string& p : pieces) v.add_piece(p);
    return v;
}

Vocabulary task_vocab(const dalm::ToyTask& task) {
    std::string joined;
    for (const auto& ex : task.train) joined += ex.text_a + "\n";
    for (const auto& ex : task.dev) joined += ex.text_a + "\n";
    std::istringstream in(joined);
    return dalm::build_vocab(in, 512);
}

nn::ModelConfig small_cfg(int vocab_size, int max_seq_len) {
    nn::ModelConfig cfg;
    cfg.layers = 1;
    cfg.hidden_dim = 16;
    cfg.heads = 2;
    cfg.ffn_dim = 32;
    cfg.max_seq_len = max_seq_len;
    cfg.vocab_size = vocab_size;
    return cfg;
}

Stage2Model small_stage2(int vocab_size, uint64_t seed, int sub_max = 12, int main_max = 24) {
    nn::ModelConfig sub = small_cfg(vocab_size, sub_max);
    nn::ModelConfig main_cfg = small_cfg(vocab_size, main_max);
    return dalm::build_stage2({sub, sub, sub, sub}, main_cfg, seed);
}

std::vector<LabeledExample> parse_tsv(const std::string& text) {
    std::istringstream in(text);
    return dalm::load_examples_tsv(in, "test.tsv");
}

}  // namespace

TEST_SUITE("finetune") {

TEST_CASE("task TSV accepts both headers") {
    auto single = parse_tsv("text_a\tlabel\nthe archer saw\t1\nthe keller met\t0\n");
    REQUIRE(single.size() == 2);
    CHECK(single[0].text_a == "the archer saw");
    CHECK(single[0].label == 1);
    CHECK_FALSE(single[0].has_b);
    CHECK(single[1].label == 0);

    auto pair = parse_tsv("text_a\ttext_b\tlabel\nfoo bar\tbaz\t1\n");
    REQUIRE(pair.size() == 1);
    CHECK(pair[0].has_b);
    CHECK(pair[0].text_b == "baz");
}

TEST_CASE("task TSV tolerates CRLF and blank lines") {
    auto rows = parse_tsv("text_a\tlabel\r\nfoo\t1\r\n\r\nbar\t0\r\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].text_a == "foo");
    CHECK(rows[1].text_a == "bar");
}

TEST_CASE("task TSV rejects malformed input") {
    CHECK_THROWS_WITH_AS(parse_tsv(""), doctest::Contains("empty task file"), dalm::DataError);
    CHECK_THROWS_WITH_AS(parse_tsv("sentence\tlabel\nfoo\t1\n"),
                         doctest::Contains("header must be"), dalm::DataError);
    CHECK_THROWS_WITH_AS(parse_tsv("text_a\tlabel\nfoo\t1\textra\n"),
                         doctest::Contains("columns"), dalm::DataError);
    CHECK_THROWS_WITH_AS(parse_tsv("text_a\tlabel\nfoo\tx\n"),
                         doctest::Contains("label is not an integer"), dalm::DataError);
    CHECK_THROWS_WITH_AS(parse_tsv("text_a\tlabel\nfoo\t3x\n"),
                         doctest::Contains("label is not an integer"), dalm::DataError);
    CHECK_THROWS_WITH_AS(parse_tsv("text_a\tlabel\nfoo\t-2\n"),
                         doctest::Contains("negative label"), dalm::DataError);
    CHECK(parse_tsv("text_a\tlabel\n").empty());  // header only
    CHECK_THROWS_WITH_AS(dalm::load_examples_tsv_file("/nonexistent/task.tsv"),
                         doctest::Contains("cannot open task file"), dalm::DataError);
}

TEST_CASE("encode_pair lays out [CLS] a [SEP] b [SEP]") {
    Vocabulary v = words_vocab({"a", "b", "c", "d", "e", "f", "g"});
    const int ga = v.lookup("a"), gb = v.lookup("b"), gc = v.lookup("c"), gd = v.lookup("d");

    dalm::PairEncoding single = dalm::encode_pair(v, "a b c", "", false, 16);
    CHECK(single.ids == std::vector<dalm::TokenId>{Vocabulary::kCls, ga, gb, gc,
                                                   Vocabulary::kSep});
    REQUIRE(single.spans_a.size() == 3);
    CHECK(single.spans_a[0].begin == 1);
    CHECK(single.spans_a[0].end == 2);
    CHECK(single.spans_a[2].begin == 3);
    CHECK(single.spans_b.empty());

    dalm::PairEncoding pair = dalm::encode_pair(v, "a b", "c d", true, 16);
    CHECK(pair.ids == std::vector<dalm::TokenId>{Vocabulary::kCls, ga, gb, Vocabulary::kSep,
                                                 gc, gd, Vocabulary::kSep});
    REQUIRE(pair.spans_b.size() == 2);
    CHECK(pair.spans_b[0].begin == 4);
    CHECK(pair.spans_b[0].end == 5);
    CHECK(pair.spans_b[1].begin == 5);
}

TEST_CASE("encode_pair trims the second side first") {
    Vocabulary v = words_vocab({"a", "b", "c", "d", "e", "f", "g"});
    // a has 4 pieces, b has 3; budget at max_len 8 is 5 so b keeps 1 piece.
    dalm::PairEncoding pe = dalm::encode_pair(v, "a b c d", "e f g", true, 8);
    REQUIRE(pe.ids.size() == 8);
    CHECK(pe.ids[5] == Vocabulary::kSep);
    CHECK(pe.ids[6] == v.lookup("e"));
    CHECK(pe.ids[7] == Vocabulary::kSep);
    REQUIRE(pe.spans_b.size() == 3);
    CHECK(pe.spans_b[0].begin == 6);
    CHECK(pe.spans_b[0].end == 7);
    CHECK(pe.spans_b[1].begin == pe.spans_b[1].end);  // lost to truncation
    CHECK(pe.spans_b[2].begin == pe.spans_b[2].end);

    // When a alone exceeds the budget, b vanishes and a is clipped.
    dalm::PairEncoding tight = dalm::encode_pair(v, "a b c d e f", "g a", true, 8);
    REQUIRE(tight.ids.size() == 8);
    CHECK(tight.ids[6] == Vocabulary::kSep);
    CHECK(tight.ids[7] == Vocabulary::kSep);
    CHECK(tight.spans_a[5].begin == tight.spans_a[5].end);
    for (const auto& s : tight.spans_b) CHECK(s.begin == s.end);

    CHECK_THROWS_WITH_AS(dalm::encode_pair(v, "a", "b", true, 2),
                         doctest::Contains("max_len too small"), dalm::DataError);
    CHECK_THROWS_WITH_AS(dalm::encode_pair(v, "a", "", false, 1),
                         doctest::Contains("max_len too small"), dalm::DataError);
    dalm::PairEncoding bare = dalm::encode_pair(v, "a", "", false, 2);
    CHECK(bare.ids == std::vector<dalm::TokenId>{Vocabulary::kCls, Vocabulary::kSep});
}

TEST_CASE("prepare_examples without parses yields chunk-free sentences") {
    std::istringstream corpus("davis had seen mason in the bar");
    Vocabulary v = dalm::build_vocab(corpus, 64);
    Stage2Model m = small_stage2(v.size(), 3);

    std::vector<LabeledExample> exs(2);
    exs[0].text_a = "davis had seen";
    exs[0].label = 1;
    exs[1].text_a = "the bar";
    exs[1].label = 0;
    auto prepared = dalm::prepare_examples(exs, nullptr, nullptr, v, m);
    REQUIRE(prepared.size() == 2);
    CHECK(prepared[0].sentence.id == "example-0");
    CHECK(prepared[0].sentence.chunks.empty());
    CHECK(prepared[0].label == 1);
    CHECK(prepared[0].sentence.ids ==
          dalm::encode_pair(v, "davis had seen", "", false, m.main.cfg.max_seq_len).ids);
}

TEST_CASE("prepare_examples aligns chunks from both sides") {
    std::istringstream corpus(
        "davis had seen mason in the bar\ndavis was very busy at the office");
    Vocabulary v = dalm::build_vocab(corpus, 64);
    Stage2Model m = small_stage2(v.size(), 5);

    std::vector<LabeledExample> exs(1);
    exs[0].text_a = "Davis had seen Mason in the bar";
    exs[0].text_b = "Davis was very busy at the office";
    exs[0].has_b = true;
    exs[0].label = 1;
    std::vector<dalm::ParsedSentence> pa = {testutil::davis_bar()};
    std::vector<dalm::ParsedSentence> pb = {testutil::davis_office()};

    auto prepared = dalm::prepare_examples(exs, &pa, &pb, v, m);
    REQUIRE(prepared.size() == 1);
    const auto& chunks = prepared[0].sentence.chunks;
    REQUIRE(chunks.size() == 6);
    // Side a: sv, dobj, pobj over piece positions 1..7.
    CHECK(chunks[0].agreement == AgreementType::SV);
    CHECK(chunks[0].target_positions == std::vector<long>{1, 2, 3});
    CHECK(chunks[1].agreement == AgreementType::DOBJ);
    CHECK(chunks[1].target_positions == std::vector<long>{3, 4});
    CHECK(chunks[2].agreement == AgreementType::POBJ);
    CHECK(chunks[2].target_positions == std::vector<long>{5, 6, 7});
    // Side b starts after [CLS] a [SEP] at offset 9.
    CHECK(chunks[3].agreement == AgreementType::SV);
    CHECK(chunks[3].target_positions == std::vector<long>{9, 10});
    CHECK(chunks[4].agreement == AgreementType::POBJ);
    CHECK(chunks[4].target_positions == std::vector<long>{13, 14, 15});
    CHECK(chunks[5].agreement == AgreementType::COMP);
    CHECK(chunks[5].target_positions == std::vector<long>{10, 11, 12});
}

TEST_CASE("prepare_examples validates parses against texts") {
    std::istringstream corpus("davis had seen mason in the bar pub");
    Vocabulary v = dalm::build_vocab(corpus, 64);
    Stage2Model m = small_stage2(v.size(), 7);

    std::vector<LabeledExample> exs(1);
    exs[0].text_a = "davis had seen mason in the bar";
    std::vector<dalm::ParsedSentence> parses = {testutil::davis_bar()};

    std::vector<dalm::ParsedSentence> two = {testutil::davis_bar(), testutil::davis_office()};
    CHECK_THROWS_WITH_AS(dalm::prepare_examples(exs, &two, nullptr, v, m),
                         doctest::Contains("parses for text_a"), dalm::DataError);

    exs[0].text_a = "davis had seen mason in the pub";
    CHECK_THROWS_WITH_AS(dalm::prepare_examples(exs, &parses, nullptr, v, m),
                         doctest::Contains("pub"), dalm::DataError);

    exs[0].text_a = "davis had seen";
    CHECK_THROWS_WITH_AS(dalm::prepare_examples(exs, &parses, nullptr, v, m),
                         doctest::Contains("tokens"), dalm::DataError);
}

TEST_CASE("finetune learns the marker task") {
    dalm::ToyTask task = dalm::make_marker_task(32, 16, 9);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 101);
    auto train = dalm::prepare_examples(task.train, &task.train_parses, nullptr, v, m);
    auto dev = dalm::prepare_examples(task.dev, &task.dev_parses, nullptr, v, m);

    dalm::FinetuneConfig cfg;
    cfg.epochs = 16;
    cfg.batch_size = 4;
    cfg.lr = 3e-3;
    cfg.seed = 13;
    dalm::FinetuneResult r = dalm::finetune(m, train, dev, cfg);

    REQUIRE(r.dev_acc.size() == 16);
    const long steps_per_epoch = (32 + 4 - 1) / 4;
    REQUIRE(static_cast<long>(r.trace.size()) == steps_per_epoch * 16);
    CHECK(r.best_dev_acc >= 0.9);
    CHECK(r.best_dev_acc == *std::max_element(r.dev_acc.begin(), r.dev_acc.end()));
    CHECK(r.best_epoch >= 1);
    CHECK(r.dev_acc[static_cast<size_t>(r.best_epoch - 1)] == r.best_dev_acc);
    // First epoch reaching the maximum wins; later ties do not displace it.
    for (int e = 0; e < r.best_epoch - 1; ++e)
        CHECK(r.dev_acc[static_cast<size_t>(e)] < r.best_dev_acc);
    // The model was left at the best epoch's parameters.
    CHECK(dalm::classify_eval(m, dev) == r.best_dev_acc);
    // Cosine schedule over 0-based global steps.
    const long total = steps_per_epoch * 16;
    for (const auto& row : r.trace)
        CHECK(row.lr == dalm::cosine_lr(row.step - 1, total, cfg.lr));
}

TEST_CASE("finetune is deterministic for a fixed seed") {
    dalm::ToyTask task = dalm::make_marker_task(12, 8, 21);
    Vocabulary v = task_vocab(task);

    auto run = [&] {
        Stage2Model m = small_stage2(v.size(), 55);
        auto train = dalm::prepare_examples(task.train, &task.train_parses, nullptr, v, m);
        auto dev = dalm::prepare_examples(task.dev, &task.dev_parses, nullptr, v, m);
        dalm::FinetuneConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        cfg.lr = 1e-3;
        cfg.seed = 33;
        dalm::FinetuneResult r = dalm::finetune(m, train, dev, cfg);
        return std::make_pair(r, m.reg->find("cls.head")->value.v);
    };
    auto [r1, h1] = run();
    auto [r2, h2] = run();
    CHECK(h1 == h2);
    CHECK(r1.dev_acc == r2.dev_acc);
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].loss == r2.trace[i].loss);
        CHECK(r1.trace[i].acc == r2.trace[i].acc);
    }
}

TEST_CASE("submodels and scores stay frozen by default") {
    dalm::ToyTask task = dalm::make_marker_task(8, 4, 31);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 77);
    auto train = dalm::prepare_examples(task.train, &task.train_parses, nullptr, v, m);
    auto dev = dalm::prepare_examples(task.dev, &task.dev_parses, nullptr, v, m);

    const std::vector<float> sub_before = m.reg->find("sub.sv.emb.tok")->value.v;
    const float score_before = m.reg->find("score.sv")->value.v[0];
    const std::vector<float> main_before = m.reg->find("main.emb.tok")->value.v;

    dalm::FinetuneConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 5;
    dalm::finetune(m, train, dev, cfg);

    CHECK(m.reg->find("sub.sv.emb.tok")->value.v == sub_before);
    CHECK(m.reg->find("score.sv")->value.v[0] == score_before);
    CHECK(m.reg->find("main.emb.tok")->value.v != main_before);
}

TEST_CASE("ablation pins the removed score to zero") {
    dalm::ToyTask task = dalm::make_marker_task(8, 4, 41);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 88);
    auto train = dalm::prepare_examples(task.train, &task.train_parses, nullptr, v, m);
    auto dev = dalm::prepare_examples(task.dev, &task.dev_parses, nullptr, v, m);

    dalm::FinetuneConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 5;
    cfg.ablate = static_cast<int>(AgreementType::SV);
    dalm::finetune(m, train, dev, cfg);
    CHECK(m.reg->find("score.sv")->value.v[0] == 0.0f);
    CHECK_FALSE(m.reg->find("score.sv")->trainable);
}

TEST_CASE("ablating an agreement with no chunks changes nothing") {
    dalm::ToyTask task = dalm::make_marker_task(8, 8, 51);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 99);
    // No parses: no chunks at all, so every ablation is a no-op.
    auto dev = dalm::prepare_examples(task.dev, nullptr, nullptr, v, m);
    auto train = dalm::prepare_examples(task.train, nullptr, nullptr, v, m);

    dalm::FinetuneConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 5;
    dalm::finetune(m, train, dev, cfg);

    const double baseline = dalm::classify_eval(m, dev);
    for (AgreementType a : dalm::kAllAgreements) {
        const double ablated = dalm::classify_eval(m, dev, static_cast<int>(a));
        CHECK(ablated == baseline);
        if (baseline > 0.0) {
            dalm::AblationRow row = dalm::make_ablation_row(a, baseline, ablated);
            CHECK(row.remaining_pct == 100.0);
        }
    }
}

TEST_CASE("epochs zero keeps the freshly initialized head") {
    dalm::ToyTask task = dalm::make_marker_task(4, 4, 61);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 111);
    auto train = dalm::prepare_examples(task.train, nullptr, nullptr, v, m);
    auto dev = dalm::prepare_examples(task.dev, nullptr, nullptr, v, m);

    dalm::FinetuneConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 5;
    dalm::FinetuneResult r = dalm::finetune(m, train, dev, cfg);
    CHECK(r.dev_acc.empty());
    CHECK(r.best_epoch == 0);
    CHECK(r.best_dev_acc >= 0.0);
    CHECK(r.best_dev_acc <= 1.0);
    CHECK(dalm::classify_eval(m, dev) == r.best_dev_acc);
}

TEST_CASE("finetune validates its inputs") {
    dalm::ToyTask task = dalm::make_marker_task(4, 4, 71);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 121);
    auto train = dalm::prepare_examples(task.train, nullptr, nullptr, v, m);
    auto dev = dalm::prepare_examples(task.dev, nullptr, nullptr, v, m);

    dalm::FinetuneConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 5;

    dalm::FinetuneConfig bad = cfg;
    bad.epochs = -1;
    CHECK_THROWS_AS(dalm::finetune(m, train, dev, bad), dalm::DataError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(dalm::finetune(m, train, dev, bad), dalm::DataError);
    bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(dalm::finetune(m, train, dev, bad), dalm::DataError);
    bad = cfg;
    bad.num_classes = 1;
    CHECK_THROWS_AS(dalm::finetune(m, train, dev, bad), dalm::DataError);
    bad = cfg;
    bad.threads = 0;
    CHECK_THROWS_AS(dalm::finetune(m, train, dev, bad), dalm::DataError);
    bad = cfg;
    bad.ablate = 4;
    CHECK_THROWS_AS(dalm::finetune(m, train, dev, bad), dalm::DataError);

    CHECK_THROWS_WITH_AS(dalm::finetune(m, {}, dev, cfg),
                         doctest::Contains("no training examples"), dalm::DataError);
    CHECK_THROWS_WITH_AS(dalm::finetune(m, train, {}, cfg),
                         doctest::Contains("no dev examples"), dalm::DataError);

    auto over = train;
    over[0].label = 2;
    CHECK_THROWS_WITH_AS(dalm::finetune(m, over, dev, cfg),
                         doctest::Contains("exceeds num_classes"), dalm::DataError);
}

TEST_CASE("classify_eval requires a trained head") {
    dalm::ToyTask task = dalm::make_marker_task(4, 4, 81);
    Vocabulary v = task_vocab(task);
    Stage2Model m = small_stage2(v.size(), 131);
    auto dev = dalm::prepare_examples(task.dev, nullptr, nullptr, v, m);
    CHECK_THROWS_WITH_AS(dalm::classify_eval(m, dev),
                         doctest::Contains("no classifier head"), dalm::DataError);
}

TEST_CASE("ablation rows and CSV") {
    dalm::AblationRow row = dalm::make_ablation_row(AgreementType::DOBJ, 0.8, 0.6);
    CHECK(row.remaining_pct == doctest::Approx(75.0));
    CHECK_THROWS_WITH_AS(dalm::make_ablation_row(AgreementType::SV, 0.0, 0.5),
                         doctest::Contains("baseline accuracy must be positive"),
                         dalm::DataError);

    std::ostringstream out;
    dalm::write_ablation_csv(out, {dalm::make_ablation_row(AgreementType::SV, 0.5, 0.25)});
    CHECK(out.str() == "removed,baseline_acc,ablated_acc,remaining_pct\nsv,0.5,0.25,50\n");
}

}  // TEST_SUITE
