#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "vdpcr/autograd.hpp"
#include "vdpcr/checkpoint.hpp"
#include "vdpcr/common.hpp"
#include "vdpcr/params.hpp"
#include "support/gradcheck.hpp"

using namespace vdpcr;
namespace ag = vdpcr::ag;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("softmax of zeros is uniform") {
    auto v = ag::constant(Tensor::from_vector({0.0, 0.0, 0.0}));
    auto s = ag::softmax_rows(v);
    for (int i = 0; i < 3; ++i) CHECK(s->value[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("matmul by identity is identity") {
    Rng rng(11);
    Tensor i3({3, 3});
    for (int i = 0; i < 3; ++i) i3.at(i, i) = 1.0;
    Tensor x = random_tensor({3, 5}, rng);
    auto y = ag::matmul(ag::constant(i3), ag::constant(x));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y->value[i] == x[i]);
}

TEST_CASE("layer_norm output has zero mean and unit variance before gain/bias") {
    Rng rng(5);
    const std::size_t n = 16;
    auto x = ag::constant(random_tensor({4, n}, rng, -3.0, 3.0));
    auto gain = ag::constant(Tensor({n}, 1.0));
    auto bias = ag::constant(Tensor({n}, 0.0));
    auto y = ag::layer_norm(x, gain, bias, 0.0);  // eps 0 isolates the normalization itself
    for (std::size_t r = 0; r < 4; ++r) {
        double mu = 0.0, var = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += y->value.at(r, j);
        mu /= n;
        for (std::size_t j = 0; j < n; ++j)
            var += (y->value.at(r, j) - mu) * (y->value.at(r, j) - mu);
        var /= n;
        CHECK(std::abs(mu) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("softmax rows sum to one and are strictly positive") {
    Rng rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        auto x = ag::constant(random_tensor({3, 7}, rng, -30.0, 30.0));
        auto s = ag::softmax_rows(x);
        for (std::size_t r = 0; r < 3; ++r) {
            double total = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(s->value.at(r, j) > 0.0);
                total += s->value.at(r, j);
            }
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("masked softmax zeroes dropped columns and renormalizes the rest") {
    Rng rng(33);
    auto x = ag::constant(random_tensor({4, 6}, rng));
    std::vector<bool> keep{true, false, true, true, false, true};
    auto s = ag::masked_softmax_rows(x, keep);
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            if (!keep[j]) CHECK(s->value.at(r, j) == 0.0);
            total += s->value.at(r, j);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
    CHECK_THROWS(ag::masked_softmax_rows(x, std::vector<bool>(6, false)));
}

TEST_CASE("shape mismatches name the op") {
    auto a = ag::constant(Tensor({2, 3}));
    auto b = ag::constant(Tensor({2, 3}));
    CHECK_THROWS_WITH_AS(ag::matmul(a, b), doctest::Contains("matmul"), std::runtime_error);
    auto c = ag::constant(Tensor({4}));
    CHECK_THROWS_WITH_AS(ag::add(a, c), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("non-finite results are rejected") {
    auto z = ag::constant(Tensor::from_vector({0.0, 1.0}));
    CHECK_THROWS_WITH_AS(ag::log(z), doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("backward requires a scalar loss") {
    auto p = ag::leaf(Tensor::from_vector({1.0, 2.0}));
    CHECK_THROWS_WITH_AS(ag::backward(ag::relu(p)), doctest::Contains("scalar"),
                         std::runtime_error);
}

TEST_CASE("sum gradient is all ones; zero-scaled loss gives zero gradient") {
    auto p = ag::leaf(Tensor::from_vector({1.0, -2.0, 3.0}));
    ag::backward(ag::sum(p));
    for (int i = 0; i < 3; ++i) CHECK(p->grad[i] == 1.0);

    auto q = ag::leaf(Tensor::from_vector({1.0, 2.0}));
    ag::backward(ag::scale(ag::sum(q), 0.0));
    for (int i = 0; i < 2; ++i) CHECK(q->grad[i] == 0.0);
}

TEST_CASE("repeated backward calls accumulate leaf gradients") {
    auto p = ag::leaf(Tensor::from_vector({1.0, 1.0}));
    auto loss = ag::sum(p);
    ag::backward(loss);
    ag::backward(loss);
    for (int i = 0; i < 2; ++i) CHECK(p->grad[i] == 2.0);
}

TEST_CASE("every core op passes the finite-difference check") {
    Rng rng(1234);
    auto one_leaf = [&](std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
        return ag::leaf(random_tensor(std::move(shape), rng, lo, hi));
    };

    SUBCASE("matmul + add + bias broadcast") {
        auto a = one_leaf({3, 4});
        auto b = one_leaf({4, 5});
        auto bias = one_leaf({5});
        auto rep = gradcheck::check({a, b, bias},
                                    [&] { return ag::sum(ag::add(ag::matmul(a, b), bias)); });
        CHECK(rep.max_rel_err < 1e-6);
    }
    SUBCASE("mul, sub, scale") {
        auto a = one_leaf({2, 6});
        auto b = one_leaf({2, 6});
        auto rep = gradcheck::check(
            {a, b}, [&] { return ag::sum(ag::scale(ag::mul(ag::sub(a, b), a), 0.7)); });
        CHECK(rep.max_rel_err < 1e-6);
    }
    SUBCASE("softmax, log, exp chain") {
        auto a = one_leaf({3, 5});
        auto rep = gradcheck::check({a}, [&] {
            auto s = ag::softmax_rows(a);
            return ag::sum(ag::mul(ag::log(s), ag::exp(ag::scale(a, 0.3))));
        });
        CHECK(rep.max_rel_err < 1e-5);
    }
    SUBCASE("masked softmax") {
        auto a = one_leaf({4, 6});
        std::vector<bool> keep{true, true, false, true, false, true};
        auto w = one_leaf({4, 6});
        auto rep = gradcheck::check(
            {a, w}, [&] { return ag::sum(ag::mul(ag::masked_softmax_rows(a, keep), w)); });
        CHECK(rep.max_rel_err < 1e-5);
    }
    SUBCASE("layer_norm") {
        auto a = one_leaf({3, 8}, -2.0, 2.0);
        auto g = one_leaf({8}, 0.5, 1.5);
        auto b = one_leaf({8});
        auto rep =
            gradcheck::check({a, g, b}, [&] { return ag::sum(ag::exp(ag::layer_norm(a, g, b))); });
        CHECK(rep.max_rel_err < 1e-5);
    }
    SUBCASE("relu") {
        auto a = one_leaf({4, 4});
        // keep values away from the kink where central differences are invalid
        for (std::size_t i = 0; i < a->value.numel(); ++i)
            if (std::abs(a->value[i]) < 1e-3) a->value[i] = 0.1;
        auto rep = gradcheck::check({a}, [&] { return ag::sum(ag::relu(a)); });
        CHECK(rep.max_rel_err < 1e-6);
    }
    SUBCASE("concat, slice, gather, mean pool, transpose, pick") {
        auto a = one_leaf({3, 4});
        auto b = one_leaf({2, 4});
        auto rep = gradcheck::check({a, b}, [&] {
            auto cat = ag::concat_rows({a, b});                  // [5x4]
            auto wide = ag::concat_cols({cat, cat});             // [5x8]
            auto sl = ag::slice_cols(wide, 2, 5);                // [5x5]
            auto gr = ag::gather_rows(sl, {0, 2, 2, 4});         // repeated row
            auto mp = ag::mean_rows(gr, {0, 1, 3});              // [1x5]
            auto tr = ag::transpose(gr);                         // [5x4]
            return ag::add(ag::sum(ag::matmul(mp, tr)), ag::pick(sl, 1, 1));
        });
        CHECK(rep.max_rel_err < 1e-6);
    }
    SUBCASE("logsumexp and stack_scalars") {
        auto a = one_leaf({5});
        auto b = one_leaf({1});
        auto rep = gradcheck::check({a, b}, [&] {
            std::vector<ag::Var> parts{ag::logsumexp(a), ag::sum(b), ag::pick(a, 0, 2)};
            return ag::logsumexp(ag::stack_scalars(parts));
        });
        CHECK(rep.max_rel_err < 1e-5);
    }
}

TEST_CASE("ops are deterministic: same inputs give bit-identical outputs") {
    Rng rng(99);
    Tensor a = random_tensor({6, 6}, rng);
    Tensor b = random_tensor({6, 6}, rng);
    auto run = [&] {
        auto x = ag::matmul(ag::constant(a), ag::constant(b));
        auto s = ag::softmax_rows(x);
        return ag::logsumexp(s)->value.item();
    };
    const double first = run();
    for (int i = 0; i < 5; ++i) CHECK(run() == first);
}

TEST_CASE("adam: zero gradients leave values unchanged") {
    ParamStore params(7);
    auto p = params.create("w", {3, 3}, ParamInit::GlorotUniform);
    const Tensor before = p->value;
    p->ensure_grad();  // participates in training, gradient stays zero
    Adam opt(0.05);
    opt.step(params);
    for (std::size_t i = 0; i < before.numel(); ++i) CHECK(p->value[i] == before[i]);
}

TEST_CASE("adam: one step on x^2 moves toward the minimum") {
    ParamStore params(0);
    auto x = params.create("x", {1}, ParamInit::Zeros);
    x->value[0] = 1.0;
    Adam opt(0.1);
    params.zero_grad();
    ag::backward(ag::mul(x, x));
    opt.step(params);
    CHECK(x->value[0] < 1.0);
}

TEST_CASE("adam: 200 steps on a convex quadratic reach near-zero loss") {
    // f(x) = sum((x - t)^2) with fixed target t
    Rng rng(3);
    ParamStore params(3);
    auto x = params.create("x", {8}, ParamInit::GlorotUniform);
    auto target = ag::constant(random_tensor({8}, rng));
    auto loss_fn = [&] {
        auto d = ag::sub(x, target);
        return ag::sum(ag::mul(d, d));
    };
    const double initial = loss_fn()->value.item();
    Adam opt(0.05);
    for (int i = 0; i < 200; ++i) {
        params.zero_grad();
        ag::backward(loss_fn());
        opt.step(params);
    }
    CHECK(loss_fn()->value.item() < 1e-3 * initial);
}

TEST_CASE("checkpoint round-trips values bit-exactly and validates the header") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "vdpcr_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    ParamStore params(42);
    params.create("enc.w", {4, 6}, ParamInit::GlorotUniform);
    params.create("enc.b", {6}, ParamInit::Zeros);
    params.create("head.g", {6}, ParamInit::Ones);
    nlohmann::ordered_json meta;
    meta["note"] = "test";
    save_checkpoint(path, params, meta);

    Checkpoint ckpt = load_checkpoint(path);
    CHECK(ckpt.meta.at("note") == "test");
    CHECK(ckpt.params.size() == 3);
    for (const auto& [name, t] : ckpt.params) {
        auto v = params.get(name);
        REQUIRE(t.same_shape(v->value));
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == v->value[i]);
    }

    ParamStore other(43);
    other.create("enc.w", {4, 6}, ParamInit::Zeros);
    auto loaded = load_into(other, ckpt);
    CHECK(loaded == std::vector<std::string>{"enc.w"});
    CHECK(other.get("enc.w")->value[0] == params.get("enc.w")->value[0]);

    // corrupt header
    {
        std::ofstream os(path, std::ios::binary);
        os << "BOGUS-HEADER\n{}\n";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad header"),
                         std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("parameter init is per-name seeded: unrelated names do not shift streams") {
    ParamStore a(5);
    auto w1 = a.create("w", {4, 4}, ParamInit::GlorotUniform);

    ParamStore b(5);
    b.create("other", {2, 2}, ParamInit::GlorotUniform);
    auto w2 = b.create("w", {4, 4}, ParamInit::GlorotUniform);

    for (std::size_t i = 0; i < w1->value.numel(); ++i) CHECK(w1->value[i] == w2->value[i]);
}
