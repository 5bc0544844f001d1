#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vdpcr {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

// Written next to every command's outputs; enough to re-run it exactly.
struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;  // resolved settings after file + flag merging
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
    std::vector<std::string> outputs;
};

// Atomic: writes to a temp file in the same directory, then renames.
void write_run_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace vdpcr
