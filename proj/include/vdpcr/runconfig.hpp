#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

namespace vdpcr {

// Flat "key = value" config with [section] headers and '#' comments. Lookup
// order: the command's own section, then [common]. Flags override both.
class ConfigFile {
public:
    static ConfigFile load(const std::string& path);
    ConfigFile() = default;

    std::optional<std::string> find(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;

    nlohmann::ordered_json to_json() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace vdpcr
