#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdpcr/autograd.hpp"

namespace vdpcr {

enum class ParamInit { GlorotUniform, Zeros, Ones };

// Named trainable leaves in insertion order. Each parameter's init stream is
// keyed on (seed, name), so adding or removing an unrelated parameter never
// shifts another one's initial values.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    ag::Var create(const std::string& name, const std::vector<std::size_t>& shape,
                   ParamInit init);
    ag::Var get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::pair<std::string, ag::Var>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    void zero_grad();

    // Deep copies of all values, for best-checkpoint tracking.
    std::vector<Tensor> snapshot_values() const;
    void restore_values(const std::vector<Tensor>& values);

private:
    std::uint64_t seed_;
    std::vector<std::pair<std::string, ag::Var>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Standard Adam with bias correction. State is keyed by parameter name.
class Adam {
public:
    Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params);
    long steps_taken() const { return step_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long step_ = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> state_;  // m, v
};

}  // namespace vdpcr
