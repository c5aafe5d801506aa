#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dalm/conllu.hpp"

namespace testutil {

// Builds a ParsedSentence from {form, head, deprel} triples; indices are
// assigned 1..n in order.
inline dalm::ParsedSentence sentence(
    std::string id, const std::vector<std::tuple<std::string, int, std::string>>& toks) {
    dalm::ParsedSentence s;
    s.id = std::move(id);
    int ix = 1;
    for (const auto& [form, head, deprel] : toks) {
        dalm::ParsedToken t;
        t.index = ix++;
        t.form = form;
        t.head = head;
        t.deprel = deprel;
        s.tokens.push_back(std::move(t));
    }
    return s;
}

// The two reference sentences used throughout the chunker tests.
inline dalm::ParsedSentence davis_bar() {
    return sentence("davis-1", {{"Davis", 3, "nsubj"},
                                {"had", 3, "aux"},
                                {"seen", 0, "root"},
                                {"Mason", 3, "dobj"},
                                {"in", 3, "prep"},
                                {"the", 7, "det"},
                                {"bar", 5, "pobj"}});
}

inline dalm::ParsedSentence davis_office() {
    return sentence("davis-2", {{"Davis", 2, "nsubj"},
                                {"was", 0, "root"},
                                {"very", 4, "advmod"},
                                {"busy", 2, "acomp"},
                                {"at", 4, "prep"},
                                {"the", 7, "det"},
                                {"office", 5, "pobj"}});
}

// Unique scratch directory, removed when the object goes out of scope.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        std::uniform_int_distribution<uint64_t> dist;
        path_ = std::filesystem::temp_directory_path() /
                ("dalm-test-" + std::to_string(dist(rd)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr combined
};

// Runs a shell command and captures its combined output and exit code.
inline RunResult run_cmd(const std::string& cmd) {
    RunResult r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
    int status = pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

}  // namespace testutil
