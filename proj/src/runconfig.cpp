#include "vdpcr/runconfig.hpp"

#include <fstream>

#include "vdpcr/common.hpp"

namespace vdpcr {

namespace {

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open config '", path, "'");
    ConfigFile cfg;
    std::string line, section = "common";
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = strip(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            require(t.back() == ']', "'", path, "' line ", lineno, ": unterminated section");
            section = strip(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        require(eq != std::string::npos, "'", path, "' line ", lineno,
                ": expected 'key = value'");
        const std::string key = strip(t.substr(0, eq));
        const std::string value = strip(t.substr(eq + 1));
        require(!key.empty(), "'", path, "' line ", lineno, ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

std::optional<std::string> ConfigFile::find(const std::string& section,
                                            const std::string& key) const {
    for (const std::string& s : {section, std::string("common")}) {
        auto sit = sections_.find(s);
        if (sit == sections_.end()) continue;
        auto kit = sit->second.find(key);
        if (kit != sit->second.end()) return kit->second;
    }
    return std::nullopt;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    return find(section, key).value_or(fallback);
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    try {
        return std::stod(*v);
    } catch (const std::exception&) {
        fail("config key '", key, "': '", *v, "' is not a number");
    }
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    try {
        return std::stoi(*v);
    } catch (const std::exception&) {
        fail("config key '", key, "': '", *v, "' is not an integer");
    }
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key,
                                  std::uint64_t fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    try {
        return std::stoull(*v);
    } catch (const std::exception&) {
        fail("config key '", key, "': '", *v, "' is not an integer");
    }
}

nlohmann::ordered_json ConfigFile::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [section, kv] : sections_) {
        nlohmann::ordered_json s = nlohmann::ordered_json::object();
        for (const auto& [k, v] : kv) s[k] = v;
        j[section] = std::move(s);
    }
    return j;
}

}  // namespace vdpcr
