#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vdpcr/autograd.hpp"
#include "vdpcr/common.hpp"

// Central finite-difference gradient checking. The numeric side never touches
// the backward pass: it re-runs the forward closure at perturbed leaf values,
// so it stays an independent oracle for the analytic gradients.
namespace vdpcr::gradcheck {

struct Report {
    double max_rel_err = 0.0;
    std::string worst;  // "param[i]: analytic vs numeric"
};

inline double rel_err(double a, double b) {
    const double denom = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}

// leaves: the parameters to check. build: rebuilds the scalar loss graph from
// the leaves' current values. coords_per_leaf: 0 = all coordinates.
inline Report check(const std::vector<ag::Var>& leaves,
                    const std::function<ag::Var()>& build, double h = 1e-5,
                    std::size_t coords_per_leaf = 0, std::uint64_t coord_seed = 0) {
    // analytic pass
    for (const ag::Var& p : leaves) {
        p->ensure_grad();
        p->zero_grad();
    }
    ag::backward(build());

    Report rep;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const ag::Var& p = leaves[li];
        std::vector<std::size_t> coords;
        if (coords_per_leaf == 0 || coords_per_leaf >= p->value.numel()) {
            coords.resize(p->value.numel());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        } else {
            Rng rng(mix_seed(coord_seed, li));
            for (std::size_t i = 0; i < coords_per_leaf; ++i)
                coords.push_back(rng.below(p->value.numel()));
        }
        for (std::size_t i : coords) {
            const double orig = p->value[i];
            p->value[i] = orig + h;
            const double up = build()->value.item();
            p->value[i] = orig - h;
            const double down = build()->value.item();
            p->value[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad[i];
            const double e = rel_err(analytic, numeric);
            if (e > rep.max_rel_err) {
                rep.max_rel_err = e;
                rep.worst = "leaf " + std::to_string(li) + "[" + std::to_string(i) +
                            "]: " + std::to_string(analytic) + " vs " + std::to_string(numeric);
            }
        }
    }
    return rep;
}

}  // namespace vdpcr::gradcheck
