#include "vdpcr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "vdpcr/common.hpp"

namespace vdpcr::ag {

Tensor& Node::ensure_grad() {
    if (!grad_alloc) {
        grad = Tensor(value.shape());
        grad_alloc = true;
    }
    return grad;
}

void Node::zero_grad() {
    if (grad_alloc) grad.fill(0.0);
}

namespace {

Var make_node(const char* op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
    require(value.all_finite(), op, ": non-finite result");
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const Var& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

void check_2d_or_1d(const char* op, const Var& a) {
    require(a->value.ndim() <= 2 && a->value.ndim() >= 1, op, ": rank ", a->value.ndim(),
            " unsupported");
}

}  // namespace

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->op = "constant";
    n->value = std::move(value);
    return n;
}

Var leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->op = "leaf";
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

Var matmul(const Var& a, const Var& b) {
    check_2d_or_1d("matmul", a);
    check_2d_or_1d("matmul", b);
    const std::size_t m = a->value.rows(), k = a->value.cols();
    const std::size_t k2 = b->value.rows(), n = b->value.cols();
    require(k == k2, "matmul: inner dimensions differ, ", a->value.shape_str(), " vs ",
            b->value.shape_str());
    Tensor out({m, n});
    const double* A = a->value.data();
    const double* B = b->value.data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* Brow = B + p * n;
            double* Crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) Crow[j] += av * Brow[j];
        }
    return make_node("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        const double* G = self.grad.data();
        if (a->requires_grad) {
            double* dA = a->ensure_grad().data();
            const double* B = b->value.data();
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* Grow = G + i * n;
                    const double* Brow = B + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
                    dA[i * k + p] += acc;
                }
        }
        if (b->requires_grad) {
            double* dB = b->ensure_grad().data();
            const double* A = a->value.data();
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    if (av == 0.0) continue;
                    const double* Grow = G + i * n;
                    double* dBrow = dB + p * n;
                    for (std::size_t j = 0; j < n; ++j) dBrow[j] += av * Grow[j];
                }
        }
    });
}

Var transpose(const Var& a) {
    check_2d_or_1d("transpose", a);
    const std::size_t m = a->value.rows(), n = a->value.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a->value.data()[i * n + j];
    return make_node("transpose", std::move(out), {a}, [m, n](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* dA = a->ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += self.grad.at(j, i);
    });
}

Var add(const Var& a, const Var& b) {
    if (a->value.same_shape(b->value)) {
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
        return make_node("add", std::move(out), {a, b}, [](Node& self) {
            for (int s = 0; s < 2; ++s) {
                const Var& p = self.parents[s];
                if (!p->requires_grad) continue;
                double* d = p->ensure_grad().data();
                for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i];
            }
        });
    }
    // row broadcast: [m x n] + [n]
    const std::size_t m = a->value.rows(), n = a->value.cols();
    require(b->value.ndim() == 1 && b->value.numel() == n, "add: incompatible shapes ",
            a->value.shape_str(), " and ", b->value.shape_str());
    Tensor out = a->value;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] += b->value[j];
    return make_node("add", std::move(out), {a, b}, [m, n](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        if (a->requires_grad) {
            double* d = a->ensure_grad().data();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i];
        }
        if (b->requires_grad) {
            double* d = b->ensure_grad().data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) d[j] += self.grad.data()[i * n + j];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "sub: shapes differ, ", a->value.shape_str(), " vs ",
            b->value.shape_str());
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_node("sub", std::move(out), {a, b}, [](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        if (a->requires_grad) {
            double* d = a->ensure_grad().data();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i];
        }
        if (b->requires_grad) {
            double* d = b->ensure_grad().data();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "mul: shapes differ, ", a->value.shape_str(), " vs ",
            b->value.shape_str());
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_node("mul", std::move(out), {a, b}, [](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        if (a->requires_grad) {
            double* d = a->ensure_grad().data();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            double* d = b->ensure_grad().data();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_node("scale", std::move(out), {a}, [s](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += s * self.grad[i];
    });
}

Var concat_rows(const std::vector<Var>& xs) {
    require(!xs.empty(), "concat_rows: empty input");
    const std::size_t n = xs[0]->value.cols();
    std::size_t total = 0;
    for (const Var& x : xs) {
        require(x->value.cols() == n, "concat_rows: column mismatch, ", x->value.shape_str());
        total += x->value.rows();
    }
    Tensor out({total, n});
    std::size_t r = 0;
    for (const Var& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + r * n);
        r += x->value.rows();
    }
    return make_node("concat_rows", std::move(out), xs, [n](Node& self) {
        std::size_t r = 0;
        for (const Var& p : self.parents) {
            const std::size_t cnt = p->value.numel();
            if (p->requires_grad) {
                double* d = p->ensure_grad().data();
                const double* g = self.grad.data() + r * n;
                for (std::size_t i = 0; i < cnt; ++i) d[i] += g[i];
            }
            r += p->value.rows();
        }
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    require(!xs.empty(), "concat_cols: empty input");
    const std::size_t m = xs[0]->value.rows();
    std::size_t total = 0;
    for (const Var& x : xs) {
        require(x->value.rows() == m, "concat_cols: row mismatch, ", x->value.shape_str());
        total += x->value.cols();
    }
    Tensor out({m, total});
    std::size_t c = 0;
    for (const Var& x : xs) {
        const std::size_t n = x->value.cols();
        for (std::size_t i = 0; i < m; ++i)
            std::copy(x->value.data() + i * n, x->value.data() + (i + 1) * n,
                      out.data() + i * total + c);
        c += n;
    }
    return make_node("concat_cols", std::move(out), xs, [m, total](Node& self) {
        std::size_t c = 0;
        for (const Var& p : self.parents) {
            const std::size_t n = p->value.cols();
            if (p->requires_grad) {
                double* d = p->ensure_grad().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        d[i * n + j] += self.grad.data()[i * total + c + j];
            }
            c += n;
        }
    });
}

Var stack_scalars(const std::vector<Var>& xs) {
    require(!xs.empty(), "stack_scalars: empty input");
    Tensor out({xs.size()});
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require(xs[i]->value.is_scalar(), "stack_scalars: element ", i, " has shape ",
                xs[i]->value.shape_str());
        out[i] = xs[i]->value.item();
    }
    return make_node("stack_scalars", std::move(out), xs, [](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            const Var& p = self.parents[i];
            if (p->requires_grad) p->ensure_grad()[0] += self.grad[i];
        }
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t len) {
    const std::size_t m = a->value.rows(), n = a->value.cols();
    require(start + len <= n, "slice_cols: [", start, ",", start + len, ") out of ",
            a->value.shape_str());
    Tensor out({m, len});
    for (std::size_t i = 0; i < m; ++i)
        std::copy(a->value.data() + i * n + start, a->value.data() + i * n + start + len,
                  out.data() + i * len);
    return make_node("slice_cols", std::move(out), {a}, [m, n, start, len](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < len; ++j)
                d[i * n + start + j] += self.grad.data()[i * len + j];
    });
}

Var row(const Var& a, std::size_t r) {
    return gather_rows(a, {r});
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& idx) {
    const std::size_t m = a->value.rows(), n = a->value.cols();
    Tensor out({idx.size(), n});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < m, "gather_rows: index ", idx[i], " out of ", a->value.shape_str());
        std::copy(a->value.data() + idx[i] * n, a->value.data() + (idx[i] + 1) * n,
                  out.data() + i * n);
    }
    return make_node("gather_rows", std::move(out), {a}, [idx, n](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) d[idx[i] * n + j] += self.grad.data()[i * n + j];
    });
}

Var mean_rows(const Var& a, const std::vector<std::size_t>& idx) {
    require(!idx.empty(), "mean_rows: empty index set");
    const std::size_t m = a->value.rows(), n = a->value.cols();
    Tensor out({1, n});
    for (std::size_t i : idx) {
        require(i < m, "mean_rows: index ", i, " out of ", a->value.shape_str());
        for (std::size_t j = 0; j < n; ++j) out[j] += a->value.data()[i * n + j];
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
    return make_node("mean_rows", std::move(out), {a}, [idx, n, inv](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i : idx)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] += inv * self.grad[j];
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    return make_node("relu", std::move(out), {a}, [](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            if (a->value[i] > 0.0) d[i] += self.grad[i];
    });
}

namespace {

// Shared softmax core: softmax per row over kept columns, zeros elsewhere.
Var softmax_impl(const char* op, const Var& a, const std::vector<bool>* keep) {
    check_2d_or_1d(op, a);
    const std::size_t m = a->value.rows(), n = a->value.cols();
    if (keep) {
        require(keep->size() == n, op, ": mask size ", keep->size(), " vs ", n, " columns");
        require(std::find(keep->begin(), keep->end(), true) != keep->end(), op,
                ": all columns masked");
    }
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a->value.data() + i * n;
        double* y = out.data() + i * n;
        double mx = -HUGE_VAL;
        for (std::size_t j = 0; j < n; ++j)
            if ((!keep || (*keep)[j]) && x[j] > mx) mx = x[j];
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (keep && !(*keep)[j]) {
                y[j] = 0.0;
                continue;
            }
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
        if (keep)
            for (std::size_t j = 0; j < n; ++j)
                if (!(*keep)[j]) y[j] = 0.0;
    }
    std::vector<bool> keep_copy = keep ? *keep : std::vector<bool>();
    return make_node(op, std::move(out), {a}, [m, n, keep_copy](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.value.data() + i * n;
            const double* g = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) {
                if (!keep_copy.empty() && !keep_copy[j]) continue;
                d[i * n + j] += y[j] * (g[j] - dot);
            }
        }
    });
}

}  // namespace

Var softmax_rows(const Var& a) { return softmax_impl("softmax_rows", a, nullptr); }

Var masked_softmax_rows(const Var& a, const std::vector<bool>& keep) {
    return softmax_impl("masked_softmax_rows", a, &keep);
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
    check_2d_or_1d("layer_norm", a);
    const std::size_t m = a->value.rows(), n = a->value.cols();
    require(gain->value.ndim() == 1 && gain->value.numel() == n, "layer_norm: gain shape ",
            gain->value.shape_str(), " vs ", n, " columns");
    require(bias->value.ndim() == 1 && bias->value.numel() == n, "layer_norm: bias shape ",
            bias->value.shape_str(), " vs ", n, " columns");
    Tensor out(a->value.shape());
    Tensor xhat(a->value.shape());
    Tensor inv_std({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a->value.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += x[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            xhat.data()[i * n + j] = (x[j] - mu) * is;
            out.data()[i * n + j] = gain->value[j] * xhat.data()[i * n + j] + bias->value[j];
        }
    }
    return make_node("layer_norm", std::move(out), {a, gain, bias},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                         const Var& a = self.parents[0];
                         const Var& gain = self.parents[1];
                         const Var& bias = self.parents[2];
                         for (std::size_t i = 0; i < m; ++i) {
                             const double* g = self.grad.data() + i * n;
                             const double* xh = xhat.data() + i * n;
                             if (gain->requires_grad) {
                                 double* dg = gain->ensure_grad().data();
                                 for (std::size_t j = 0; j < n; ++j) dg[j] += g[j] * xh[j];
                             }
                             if (bias->requires_grad) {
                                 double* db = bias->ensure_grad().data();
                                 for (std::size_t j = 0; j < n; ++j) db[j] += g[j];
                             }
                             if (a->requires_grad) {
                                 double* dx = a->ensure_grad().data() + i * n;
                                 // dxhat = g * gain; dx via the two reduction terms
                                 double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) {
                                     const double dxh = g[j] * gain->value[j];
                                     sum_dxh += dxh;
                                     sum_dxh_xh += dxh * xh[j];
                                 }
                                 const double inv_n = 1.0 / static_cast<double>(n);
                                 for (std::size_t j = 0; j < n; ++j) {
                                     const double dxh = g[j] * gain->value[j];
                                     dx[j] += inv_std[i] *
                                              (dxh - inv_n * sum_dxh - xh[j] * inv_n * sum_dxh_xh);
                                 }
                             }
                         }
                     });
}

Var log(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return make_node("log", std::move(out), {a}, [](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i] / a->value[i];
    });
}

Var exp(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return make_node("exp", std::move(out), {a}, [](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad[i] * self.value[i];
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_node("sum", Tensor::scalar(s), {a}, [](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < a->value.numel(); ++i) d[i] += g;
    });
}

Var logsumexp(const Var& a) {
    require(a->value.numel() > 0, "logsumexp: empty input");
    double mx = -HUGE_VAL;
    for (std::size_t i = 0; i < a->value.numel(); ++i) mx = std::max(mx, a->value[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) z += std::exp(a->value[i] - mx);
    return make_node("logsumexp", Tensor::scalar(mx + std::log(z)), {a}, [](Node& self) {
        const Var& a = self.parents[0];
        if (!a->requires_grad) return;
        double* d = a->ensure_grad().data();
        const double lse = self.value[0];
        const double g = self.grad[0];
        for (std::size_t i = 0; i < a->value.numel(); ++i)
            d[i] += g * std::exp(a->value[i] - lse);
    });
}

Var pick(const Var& a, std::size_t r, std::size_t c) {
    const std::size_t m = a->value.rows(), n = a->value.cols();
    require(r < m && c < n, "pick: (", r, ",", c, ") out of ", a->value.shape_str());
    return make_node("pick", Tensor::scalar(a->value.data()[r * n + c]), {a},
                     [r, c, n](Node& self) {
                         const Var& a = self.parents[0];
                         if (!a->requires_grad) return;
                         a->ensure_grad().data()[r * n + c] += self.grad[0];
                     });
}

void backward(const Var& loss) {
    require(loss->value.is_scalar(), "backward: loss has shape ", loss->value.shape_str(),
            ", expected scalar");
    if (!loss->requires_grad) return;

    // post-order DFS over the requires_grad subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        bool descended = false;
        while (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (descended) continue;
        order.push_back(node);
        stack.pop_back();
    }

    // fresh gradients for interior nodes; leaves accumulate across calls
    for (Node* n : order) {
        if (!n->is_leaf()) {
            n->ensure_grad();
            n->zero_grad();
        } else {
            n->ensure_grad();
        }
    }
    loss->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace vdpcr::ag
