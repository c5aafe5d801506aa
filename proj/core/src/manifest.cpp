#include "dalm/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dalm/errors.hpp"

namespace dalm {

std::string now_iso8601_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["subcommand"] = m.subcommand;
    try {
        j["config"] = nlohmann::json::parse(m.config_json.empty() ? "{}" : m.config_json);
    } catch (const nlohmann::json::exception&) {
        j["config"] = m.config_json;  // keep it visible even if not valid JSON
    }
    j["seed"] = m.seed;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["tool_version"] = m.tool_version;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    return j.dump(2) + "\n";
}

void write_manifest(const std::string& dir, const RunManifest& m) {
    const std::string path = dir + "/manifest.json";
    std::ofstream out(path);
    if (!out) throw DataError("manifest: cannot open for write: " + path);
    out << manifest_to_json(m);
    out.flush();
    if (!out) throw DataError("manifest: write failed: " + path);
}

}  // namespace dalm
