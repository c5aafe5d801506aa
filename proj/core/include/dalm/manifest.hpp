#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dalm {

// Written as manifest.json next to every output artifact; records everything
// needed to reproduce the run bit-identically (except the timestamps).
struct RunManifest {
    std::string subcommand;
    std::string config_json;  // resolved configuration, defaults materialized
    uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version;
    std::string started_at;   // ISO 8601 UTC
    std::string finished_at;
};

std::string now_iso8601_utc();

std::string manifest_to_json(const RunManifest& m);

// Writes "<dir>/manifest.json"; dir must exist.
void write_manifest(const std::string& dir, const RunManifest& m);

}  // namespace dalm
