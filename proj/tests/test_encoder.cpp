#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "vdpcr/encoder.hpp"
#include "vdpcr/synthetic.hpp"
#include "support/gradcheck.hpp"

using namespace vdpcr;
namespace fs = std::filesystem;

namespace {

EncoderConfig tiny_config(std::size_t vocab_size, std::size_t visual_dim) {
    EncoderConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.model_dim = 8;
    cfg.ff_dim = 16;
    cfg.max_positions = 64;
    cfg.vocab_size = vocab_size;
    cfg.visual_dim = visual_dim;
    return cfg;
}

// hand-built input: M visual tokens, then the given textual ids
AssembledInput manual_input(std::vector<int> text_ids, std::size_t n_visual,
                            std::size_t visual_dim, double visual_fill = 0.25) {
    AssembledInput in;
    in.visual.assign(n_visual, std::vector<double>(visual_dim, visual_fill));
    in.text_ids = std::move(text_ids);
    in.segments.assign(1 + n_visual, kSegVisual);
    for (std::size_t i = 0; i < in.text_ids.size(); ++i) in.segments.push_back(kSegHistory);
    return in;
}

}  // namespace

TEST_CASE("config validation") {
    EncoderConfig cfg = tiny_config(10, 4);
    cfg.model_dim = 9;  // not divisible by two heads
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("divisible"), std::runtime_error);
}

TEST_CASE("textual embedding is the exact sum of token, position and segment rows") {
    ParamStore params(3);
    EncoderConfig cfg = tiny_config(12, 4);
    Encoder enc(params, cfg);
    AssembledInput in = manual_input({kClsId, 7, 7, kSepId}, 1, 4);
    ag::Var emb = enc.embed(in);

    const Tensor& tok = params.get("encoder.tok_emb")->value;
    const Tensor& pos = params.get("encoder.pos_emb")->value;
    const Tensor& seg = params.get("encoder.seg_emb")->value;
    // position 3 holds the first '7'
    for (std::size_t j = 0; j < cfg.model_dim; ++j)
        CHECK(emb->value.at(3, j) == tok.at(7, j) + pos.at(3, j) + seg.at(kSegHistory, j));
    // identical tokens at different positions embed differently
    bool differs = false;
    for (std::size_t j = 0; j < cfg.model_dim; ++j)
        if (emb->value.at(3, j) != emb->value.at(4, j)) differs = true;
    CHECK(differs);
}

TEST_CASE("zero visual vector embeds to projection bias plus position and segment rows") {
    ParamStore params(5);
    EncoderConfig cfg = tiny_config(12, 4);
    Encoder enc(params, cfg);
    AssembledInput in = manual_input({kClsId}, 2, 4, 0.0);
    ag::Var emb = enc.embed(in);
    const Tensor& pos = params.get("encoder.pos_emb")->value;
    const Tensor& seg = params.get("encoder.seg_emb")->value;
    const Tensor& bias = params.get("encoder.vis_proj.b")->value;
    for (std::size_t t = 1; t <= 2; ++t)
        for (std::size_t j = 0; j < cfg.model_dim; ++j)
            CHECK(emb->value.at(t, j) ==
                  doctest::Approx(bias[j] + pos.at(t, j) + seg.at(kSegVisual, j)).epsilon(1e-12));
}

TEST_CASE("attention_head") {
    Rng rng(17);
    const std::size_t d = 8, dh = 4;
    auto rand_leaf = [&](std::vector<std::size_t> shape) {
        Tensor t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.8, 0.8);
        return ag::leaf(std::move(t));
    };

    SUBCASE("single position attends only to itself") {
        auto x = rand_leaf({1, d});
        auto [y, att] = attention_head(x, rand_leaf({d, dh}), rand_leaf({dh}), rand_leaf({d, dh}),
                                       rand_leaf({dh}), rand_leaf({d, dh}), rand_leaf({dh}),
                                       {true});
        CHECK(att->value.numel() == 1);
        CHECK(att->value[0] == 1.0);
    }

    SUBCASE("zeroed query/key maps give uniform rows") {
        const std::size_t T = 5;
        auto x = rand_leaf({T, d});
        auto zero_w = ag::leaf(Tensor({d, dh}));
        auto zero_b = ag::leaf(Tensor({dh}));
        auto [y, att] = attention_head(x, zero_w, zero_b, zero_w, zero_b, rand_leaf({d, dh}),
                                       rand_leaf({dh}), std::vector<bool>(T, true));
        for (std::size_t i = 0; i < T; ++i)
            for (std::size_t j = 0; j < T; ++j)
                CHECK(att->value.at(i, j) == doctest::Approx(1.0 / T).epsilon(1e-12));
    }

    SUBCASE("weighted sum matches an explicit loop within 1e-9") {
        const std::size_t T = 6;
        auto x = rand_leaf({T, d});
        auto wq = rand_leaf({d, dh}), bq = rand_leaf({dh});
        auto wk = rand_leaf({d, dh}), bk = rand_leaf({dh});
        auto wv = rand_leaf({d, dh}), bv = rand_leaf({dh});
        auto [y, att] = attention_head(x, wq, bq, wk, bk, wv, bv, std::vector<bool>(T, true));

        // naive-loop oracle, recomputed from raw values
        std::vector<std::vector<double>> q(T, std::vector<double>(dh)), k = q, v = q;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < dh; ++j) {
                double sq = bq->value[j], sk = bk->value[j], sv = bv->value[j];
                for (std::size_t c = 0; c < d; ++c) {
                    sq += x->value.at(t, c) * wq->value.at(c, j);
                    sk += x->value.at(t, c) * wk->value.at(c, j);
                    sv += x->value.at(t, c) * wv->value.at(c, j);
                }
                q[t][j] = sq;
                k[t][j] = sk;
                v[t][j] = sv;
            }
        for (std::size_t i = 0; i < T; ++i) {
            std::vector<double> logits(T, 0.0);
            for (std::size_t j = 0; j < T; ++j) {
                for (std::size_t c = 0; c < dh; ++c) logits[j] += q[i][c] * k[j][c];
                logits[j] /= std::sqrt(static_cast<double>(dh));
            }
            double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) z += (l = std::exp(l - mx));
            for (std::size_t j = 0; j < T; ++j)
                CHECK(att->value.at(i, j) == doctest::Approx(logits[j] / z).epsilon(1e-9));
            for (std::size_t c = 0; c < dh; ++c) {
                double expect = 0.0;
                for (std::size_t j = 0; j < T; ++j) expect += logits[j] / z * v[j][c];
                CHECK(y->value.at(i, c) == doctest::Approx(expect).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("transformer layer shape, residual wiring and gradients") {
    ParamStore params(11);
    EncoderConfig cfg = tiny_config(16, 4);
    cfg.n_layers = 1;
    Encoder enc(params, cfg);
    AssembledInput in = manual_input({kClsId, 8, 9, 10, kSepId}, 1, 4);

    SUBCASE("output shape equals input shape") {
        EncoderOutput out = enc.encode(in);
        CHECK(out.final->value.shape() == std::vector<std::size_t>{in.total_len(), cfg.model_dim});
    }

    SUBCASE("with attention output and second feed-forward layer zeroed, the layer reduces to "
            "two nested normalizations") {
        params.get("encoder.l0.attn_out.w")->value.fill(0.0);
        params.get("encoder.l0.attn_out.b")->value.fill(0.0);
        params.get("encoder.l0.ffn.w2")->value.fill(0.0);
        params.get("encoder.l0.ffn.b2")->value.fill(0.0);
        ag::Var x0 = enc.embed(in);
        EncoderOutput out = enc.encode(in);
        auto g = ag::constant(Tensor({cfg.model_dim}, 1.0));
        auto b = ag::constant(Tensor({cfg.model_dim}, 0.0));
        ag::Var expected = ag::layer_norm(ag::layer_norm(x0, g, b), g, b);
        for (std::size_t i = 0; i < expected->value.numel(); ++i)
            CHECK(out.final->value[i] == doctest::Approx(expected->value[i]).epsilon(1e-12));
    }

    SUBCASE("gradients through the layer pass the finite-difference check") {
        std::vector<ag::Var> leaves;
        for (const auto& [name, v] : params.items()) leaves.push_back(v);
        auto rep = gradcheck::check(
            leaves, [&] { return ag::logsumexp(enc.encode(in).final); }, 1e-5, 6, 99);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("encode bookkeeping") {
    ParamStore params(7);
    EncoderConfig cfg = tiny_config(16, 4);
    Encoder enc(params, cfg);
    AssembledInput in = manual_input({kClsId, 8, 9, kSepId}, 2, 4);

    SUBCASE("zero layers return the embeddings unchanged") {
        ParamStore p2(7);
        EncoderConfig c2 = cfg;
        c2.n_layers = 0;
        Encoder e2(p2, c2);
        EncoderOutput out = e2.encode(in);
        ag::Var emb = e2.embed(in);
        for (std::size_t i = 0; i < emb->value.numel(); ++i)
            CHECK(out.final->value[i] == emb->value[i]);
        CHECK(out.attention.empty());
    }

    SUBCASE("attention map count is layers times heads") {
        EncoderOutput out = enc.encode(in);
        std::size_t count = 0;
        for (const auto& layer : out.attention) count += layer.size();
        CHECK(count == cfg.n_layers * cfg.n_heads);
    }

    SUBCASE("encode is deterministic") {
        EncoderOutput a = enc.encode(in);
        EncoderOutput b = enc.encode(in);
        for (std::size_t i = 0; i < a.final->value.numel(); ++i)
            CHECK(a.final->value[i] == b.final->value[i]);
    }
}

TEST_CASE("PAD handling") {
    ParamStore params(13);
    EncoderConfig cfg = tiny_config(16, 4);
    Encoder enc(params, cfg);
    AssembledInput with_pad = manual_input({kClsId, 8, 9, kSepId, kPadId, kPadId}, 1, 4);

    SUBCASE("attention to PAD columns is exactly zero and rows renormalize to one") {
        EncoderOutput out = enc.encode(with_pad);
        const std::size_t T = out.seq_len;
        for (const auto& layer : out.attention)
            for (const auto& att : layer)
                for (std::size_t i = 0; i < T; ++i) {
                    double row = 0.0;
                    for (std::size_t j = 0; j < T; ++j) {
                        if (!out.keep[j]) CHECK(att->value.at(i, j) == 0.0);
                        row += att->value.at(i, j);
                    }
                    CHECK(std::abs(row - 1.0) < 1e-6);
                }
    }

    SUBCASE("adding more PAD never changes non-PAD outputs") {
        AssembledInput more_pad =
            manual_input({kClsId, 8, 9, kSepId, kPadId, kPadId, kPadId, kPadId}, 1, 4);
        EncoderOutput a = enc.encode(with_pad);
        EncoderOutput b = enc.encode(more_pad);
        const std::size_t non_pad = 2 + 4;  // IMG + visual + 4 textual
        for (std::size_t t = 0; t < non_pad; ++t)
            for (std::size_t j = 0; j < cfg.model_dim; ++j)
                CHECK(a.final->value.at(t, j) == doctest::Approx(b.final->value.at(t, j)).epsilon(1e-12));
    }
}

TEST_CASE("attention rows sum to one across random forward passes") {
    auto dialogs = generate_synthetic(10, 31);
    Vocabulary vocab = build_vocabulary(dialogs);
    ParamStore params(41);
    EncoderConfig cfg = tiny_config(vocab.size(), 8);
    Encoder enc(params, cfg);
    for (const Dialog& d : dialogs) {
        EncoderOutput out = enc.encode(assemble_full(d, vocab, 64));
        for (const auto& layer : out.attention)
            for (const auto& att : layer)
                for (std::size_t i = 0; i < out.seq_len; ++i) {
                    double row = 0.0;
                    for (std::size_t j = 0; j < out.seq_len; ++j) row += att->value.at(i, j);
                    CHECK(std::abs(row - 1.0) < 1e-6);
                }
    }
}

TEST_CASE("attention dump round-trips and the sidecar maps mentions") {
    auto dialogs = generate_synthetic(3, 43);
    Vocabulary vocab = build_vocabulary(dialogs);
    ParamStore params(43);
    EncoderConfig cfg = tiny_config(vocab.size(), 8);
    Encoder enc(params, cfg);

    const Dialog& d = dialogs[0];
    AssembledInput in = assemble_full(d, vocab, 64);
    EncoderOutput out = enc.encode(in);

    const auto dir = fs::temp_directory_path() / "vdpcr_att_test";
    fs::create_directories(dir);
    const std::string att_path = (dir / "d.att").string();
    const std::string side_path = (dir / "d.tsv").string();
    write_attention_dump(att_path, d.id, out);
    write_mention_sidecar(side_path, d, in);

    AttentionDump dump = read_attention_dump(att_path);
    CHECK(dump.dialog_id == d.id);
    CHECK(dump.n_layers == cfg.n_layers);
    CHECK(dump.n_heads == cfg.n_heads);
    CHECK(dump.seq_len == out.seq_len);
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        for (std::size_t k = 0; k < cfg.n_heads; ++k)
            for (std::size_t i = 0; i < dump.seq_len * dump.seq_len; ++i)
                CHECK(dump.attention[l][k][i] == out.attention[l][k]->value[i]);

    for (const auto& [span, pos] : read_mention_sidecar(side_path)) {
        auto expect = in.position_of(span);
        REQUIRE(expect.has_value());
        CHECK(pos == *expect);
    }
    fs::remove_all(dir);
}
