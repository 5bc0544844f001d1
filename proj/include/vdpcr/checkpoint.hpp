#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vdpcr/params.hpp"
#include "vdpcr/tensor.hpp"

#include "json.hpp"

namespace vdpcr {

// Checkpoint layout:
//   line 1: "VDPCR-CKPT-1"
//   line 2: one-line JSON manifest {"meta": {...}, "params": [{name, shape, offset}, ...]}
//   then:   little-endian 64-bit floats, densely packed; offsets are byte
//           offsets into this data section
inline constexpr const char* kCheckpointMagic = "VDPCR-CKPT-1";

struct Checkpoint {
    nlohmann::ordered_json meta;
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::ordered_json& meta);
Checkpoint load_checkpoint(const std::string& path);

// Copies every checkpoint tensor whose name exists in the store; returns the
// names that were loaded. Shape mismatches are hard errors.
std::vector<std::string> load_into(ParamStore& params, const Checkpoint& ckpt);

}  // namespace vdpcr
