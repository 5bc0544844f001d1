#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdpcr/assemble.hpp"
#include "vdpcr/autograd.hpp"
#include "vdpcr/params.hpp"

namespace vdpcr {

struct EncoderConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t model_dim = 32;
    std::size_t ff_dim = 64;
    std::size_t max_positions = 256;
    std::size_t vocab_size = 0;
    std::size_t visual_dim = 8;

    std::size_t head_dim() const { return model_dim / n_heads; }
    void validate() const;
};

struct EncoderOutput {
    ag::Var final;                                 // [T x d]
    std::vector<std::vector<ag::Var>> head_out;    // [L][K], each [T x d/K]
    std::vector<std::vector<ag::Var>> attention;   // [L][K], each [T x T]
    std::vector<bool> keep;                        // false at PAD positions
    std::size_t seq_len = 0;
    std::size_t cls_pos = 0;
    std::size_t img_pos = 0;
};

// Single-stream transformer over the concatenated visual+textual sequence.
// Creates its parameters in the given store under the "encoder." prefix.
class Encoder {
public:
    Encoder(ParamStore& params, const EncoderConfig& cfg);

    const EncoderConfig& config() const { return cfg_; }

    ag::Var embed(const AssembledInput& in) const;
    EncoderOutput encode(const AssembledInput& in) const;

private:
    struct HeadParams {
        ag::Var wq, bq, wk, bk, wv, bv;
    };
    struct LayerParams {
        std::vector<HeadParams> heads;
        ag::Var attn_out_w, attn_out_b;
        ag::Var ln1_g, ln1_b;
        ag::Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        ag::Var ln2_g, ln2_b;
    };

    EncoderConfig cfg_;
    ag::Var tok_emb_, pos_emb_, seg_emb_, vis_w_, vis_b_;
    std::vector<LayerParams> layers_;
};

// Per-head scaled dot-product attention; exposed for direct testing.
// Returns (weighted values [T x d_head], attention map [T x T]).
std::pair<ag::Var, ag::Var> attention_head(const ag::Var& x, const ag::Var& wq, const ag::Var& bq,
                                           const ag::Var& wk, const ag::Var& bk, const ag::Var& wv,
                                           const ag::Var& bv, const std::vector<bool>& keep);

// Attention dump: "L K T dialog_id" header line, then L*K matrices of
// little-endian doubles in (layer, head) order, each row-major [T x T].
struct AttentionDump {
    std::size_t n_layers = 0, n_heads = 0, seq_len = 0;
    std::string dialog_id;
    std::vector<std::vector<Tensor>> attention;  // [L][K]
};

void write_attention_dump(const std::string& path, const std::string& dialog_id,
                          const EncoderOutput& out);
// sidecar: mention spans -> absolute positions, one row per cluster mention
void write_mention_sidecar(const std::string& path, const Dialog& d, const AssembledInput& in);
AttentionDump read_attention_dump(const std::string& path);
std::vector<std::pair<Span, std::pair<std::size_t, std::size_t>>> read_mention_sidecar(
    const std::string& path);

}  // namespace vdpcr
