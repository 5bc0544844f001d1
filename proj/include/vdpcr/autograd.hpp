#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vdpcr/tensor.hpp"

namespace vdpcr::ag {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the computation graph. Built fresh per forward pass; leaves
// (parameters, constants) persist across passes.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first use, same shape as value
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // distributes this->grad to parents
    const char* op = "leaf";

    bool is_leaf() const { return parents.empty(); }
    Tensor& ensure_grad();
    void zero_grad();
};

Var constant(Tensor value);
Var leaf(Tensor value);  // trainable: requires_grad = true

// Core operations. Every op validates shapes, registers an exact backward
// rule, and rejects non-finite results.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);  // same shape, or [m x n] + [n] row broadcast
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var stack_scalars(const std::vector<Var>& xs);
Var slice_cols(const Var& a, std::size_t start, std::size_t len);
Var row(const Var& a, std::size_t r);
Var gather_rows(const Var& a, const std::vector<std::size_t>& idx);
Var mean_rows(const Var& a, const std::vector<std::size_t>& idx);  // mean pool -> [1 x n]
Var relu(const Var& a);
Var softmax_rows(const Var& a);
// Softmax per row over kept columns only; dropped columns are exactly 0.
Var masked_softmax_rows(const Var& a, const std::vector<bool>& keep);
Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var log(const Var& a);
Var exp(const Var& a);
Var sum(const Var& a);         // -> scalar
Var logsumexp(const Var& a);   // over all elements -> scalar
Var pick(const Var& a, std::size_t r, std::size_t c);  // element -> scalar

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are reset per call.
void backward(const Var& loss);

}  // namespace vdpcr::ag
