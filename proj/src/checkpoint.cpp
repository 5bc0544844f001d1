#include "vdpcr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vdpcr/common.hpp"

namespace vdpcr {

namespace {

void write_le_doubles(std::ostream& os, const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &data[i], 8);
        unsigned char buf[8];
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        os.write(reinterpret_cast<const char*>(buf), 8);
    }
}

void read_le_doubles(std::istream& is, double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char buf[8];
        is.read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
        std::memcpy(&data[i], &bits, 8);
    }
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::ordered_json& meta) {
    nlohmann::ordered_json manifest;
    manifest["meta"] = meta;
    auto& plist = manifest["params"] = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (const auto& [name, v] : params.items()) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["shape"] = v->value.shape();
        entry["offset"] = offset;
        plist.push_back(std::move(entry));
        offset += v->value.numel() * 8;
    }
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open '", path, "' for writing");
    os << kCheckpointMagic << "\n" << manifest.dump() << "\n";
    for (const auto& [name, v] : params.items())
        write_le_doubles(os, v->value.data(), v->value.numel());
    require(os.good(), "write failed for '", path, "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open checkpoint '", path, "'");
    std::string magic, manifest_line;
    std::getline(is, magic);
    require(magic == kCheckpointMagic, "'", path, "': bad header '", magic, "', expected ",
            kCheckpointMagic);
    std::getline(is, manifest_line);
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(manifest_line);
    } catch (const std::exception& e) {
        fail("'", path, "': bad manifest: ", e.what());
    }
    Checkpoint ckpt;
    ckpt.meta = manifest.value("meta", nlohmann::ordered_json::object());
    const std::streampos data_start = is.tellg();
    for (const auto& entry : manifest.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        Tensor t(shape);
        is.seekg(data_start + static_cast<std::streamoff>(offset));
        read_le_doubles(is, t.data(), t.numel());
        require(is.good(), "'", path, "': truncated data for parameter '", name, "'");
        ckpt.params.emplace_back(name, std::move(t));
    }
    return ckpt;
}

std::vector<std::string> load_into(ParamStore& params, const Checkpoint& ckpt) {
    std::vector<std::string> loaded;
    for (const auto& [name, t] : ckpt.params) {
        if (!params.has(name)) continue;
        ag::Var v = params.get(name);
        require(v->value.same_shape(t), "checkpoint parameter '", name, "' has shape ",
                t.shape_str(), ", model expects ", v->value.shape_str());
        v->value = t;
        loaded.push_back(name);
    }
    return loaded;
}

}  // namespace vdpcr
