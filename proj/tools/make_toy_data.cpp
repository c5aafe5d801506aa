// Regenerates the bundled toy data (examples/toy): a parsed corpus covering
// all four agreement types plus two small classification tasks with parses.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dalm/conllu.hpp"
#include "dalm/errors.hpp"
#include "dalm/synth.hpp"

namespace {

void write_conllu(const std::string& path, const std::vector<dalm::ParsedSentence>& ss) {
    std::ofstream out(path);
    if (!out) throw dalm::DataError("cannot open for writing: " + path);
    dalm::serialize_conllu(ss, out);
}

void write_tsv(const std::string& path, const std::vector<dalm::LabeledExample>& ex) {
    std::ofstream out(path);
    if (!out) throw dalm::DataError("cannot open for writing: " + path);
    out << "text_a\tlabel\n";
    for (const dalm::LabeledExample& e : ex) out << e.text_a << "\t" << e.label << "\n";
}

void write_task(const std::string& dir, const std::string& name, const dalm::ToyTask& t) {
    write_tsv(dir + "/" + name + ".train.tsv", t.train);
    write_tsv(dir + "/" + name + ".dev.tsv", t.dev);
    write_conllu(dir + "/" + name + ".train.conllu", t.train_parses);
    write_conllu(dir + "/" + name + ".dev.conllu", t.dev_parses);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"regenerate the bundled toy corpus and task files"};
    std::string out_dir = "examples/toy";
    size_t sentences = 96;
    size_t train_n = 96;
    size_t dev_n = 48;
    uint64_t seed = 42;
    app.add_option("--out-dir", out_dir, "target directory")->capture_default_str();
    app.add_option("--sentences", sentences, "corpus size")->capture_default_str();
    app.add_option("--train", train_n, "task training examples")->capture_default_str();
    app.add_option("--dev", dev_n, "task dev examples")->capture_default_str();
    app.add_option("--seed", seed, "generator seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        write_conllu(out_dir + "/corpus.conllu", dalm::make_toy_corpus(sentences, seed));
        write_task(out_dir, "subject", dalm::make_subject_task(train_n, dev_n, seed));
        write_task(out_dir, "marker", dalm::make_marker_task(train_n, dev_n, seed));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << "wrote " << out_dir << "\n";
    return 0;
}
