#include "vdpcr/params.hpp"

#include <cmath>

#include "vdpcr/common.hpp"

namespace vdpcr {

ag::Var ParamStore::create(const std::string& name, const std::vector<std::size_t>& shape,
                           ParamInit init) {
    require(!has(name), "parameter '", name, "' already exists");
    Tensor t(shape);
    switch (init) {
        case ParamInit::Zeros:
            break;
        case ParamInit::Ones:
            t.fill(1.0);
            break;
        case ParamInit::GlorotUniform: {
            // fan_in/fan_out from the trailing two dims; 1-D tensors fall back
            // to their length on both sides
            std::size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
            std::size_t fan_out = shape.back();
            const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            Rng rng(mix_seed(seed_, fnv1a(name)));
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-r, r);
            break;
        }
    }
    ag::Var v = ag::leaf(std::move(t));
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
}

ag::Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '", name, "'");
    return items_[it->second].second;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : items_) v->zero_grad();
}

std::vector<Tensor> ParamStore::snapshot_values() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [name, v] : items_) out.push_back(v->value);
    return out;
}

void ParamStore::restore_values(const std::vector<Tensor>& values) {
    require(values.size() == items_.size(), "restore_values: ", values.size(), " tensors for ",
            items_.size(), " parameters");
    for (std::size_t i = 0; i < values.size(); ++i) {
        require(values[i].same_shape(items_[i].second->value), "restore_values: shape mismatch at '",
                items_[i].first, "'");
        items_[i].second->value = values[i];
    }
}

void Adam::step(ParamStore& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (auto& [name, p] : params.items()) {
        if (!p->grad_alloc) continue;  // never touched by backward: not trained
        auto it = state_.find(name);
        if (it == state_.end())
            it = state_.emplace(name, std::make_pair(Tensor(p->value.shape()),
                                                     Tensor(p->value.shape()))).first;
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        const Tensor& g = p->grad;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace vdpcr
