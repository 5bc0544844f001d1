#include "vdpcr/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vdpcr/common.hpp"
#include "vdpcr/corpus.hpp"

namespace vdpcr {

void EncoderConfig::validate() const {
    require(n_layers >= 0 && n_heads > 0 && model_dim > 0 && ff_dim > 0 && max_positions > 0 &&
                vocab_size > 0 && visual_dim > 0,
            "encoder config: all dimensions must be positive");
    require(model_dim % n_heads == 0, "encoder config: model_dim ", model_dim,
            " not divisible by n_heads ", n_heads);
}

Encoder::Encoder(ParamStore& params, const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.model_dim, dh = cfg_.head_dim();
    tok_emb_ = params.create("encoder.tok_emb", {cfg_.vocab_size, d}, ParamInit::GlorotUniform);
    pos_emb_ = params.create("encoder.pos_emb", {cfg_.max_positions, d}, ParamInit::GlorotUniform);
    seg_emb_ = params.create("encoder.seg_emb", {3, d}, ParamInit::GlorotUniform);
    vis_w_ = params.create("encoder.vis_proj.w", {cfg_.visual_dim, d}, ParamInit::GlorotUniform);
    vis_b_ = params.create("encoder.vis_proj.b", {d}, ParamInit::Zeros);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "encoder.l" + std::to_string(l) + ".";
        LayerParams lp;
        for (std::size_t k = 0; k < cfg_.n_heads; ++k) {
            const std::string h = p + "h" + std::to_string(k) + ".";
            HeadParams hp;
            hp.wq = params.create(h + "q.w", {d, dh}, ParamInit::GlorotUniform);
            hp.bq = params.create(h + "q.b", {dh}, ParamInit::Zeros);
            hp.wk = params.create(h + "k.w", {d, dh}, ParamInit::GlorotUniform);
            hp.bk = params.create(h + "k.b", {dh}, ParamInit::Zeros);
            hp.wv = params.create(h + "v.w", {d, dh}, ParamInit::GlorotUniform);
            hp.bv = params.create(h + "v.b", {dh}, ParamInit::Zeros);
            lp.heads.push_back(std::move(hp));
        }
        lp.attn_out_w = params.create(p + "attn_out.w", {d, d}, ParamInit::GlorotUniform);
        lp.attn_out_b = params.create(p + "attn_out.b", {d}, ParamInit::Zeros);
        lp.ln1_g = params.create(p + "ln1.g", {d}, ParamInit::Ones);
        lp.ln1_b = params.create(p + "ln1.b", {d}, ParamInit::Zeros);
        lp.ffn_w1 = params.create(p + "ffn.w1", {d, cfg_.ff_dim}, ParamInit::GlorotUniform);
        lp.ffn_b1 = params.create(p + "ffn.b1", {cfg_.ff_dim}, ParamInit::Zeros);
        lp.ffn_w2 = params.create(p + "ffn.w2", {cfg_.ff_dim, d}, ParamInit::GlorotUniform);
        lp.ffn_b2 = params.create(p + "ffn.b2", {d}, ParamInit::Zeros);
        lp.ln2_g = params.create(p + "ln2.g", {d}, ParamInit::Ones);
        lp.ln2_b = params.create(p + "ln2.b", {d}, ParamInit::Zeros);
        layers_.push_back(std::move(lp));
    }
}

ag::Var Encoder::embed(const AssembledInput& in) const {
    const std::size_t T = in.total_len();
    require(T <= cfg_.max_positions, "sequence of ", T, " positions exceeds max_positions ",
            cfg_.max_positions);
    for (const auto& f : in.visual)
        require(f.size() == cfg_.visual_dim, "visual feature of dim ", f.size(),
                ", encoder expects ", cfg_.visual_dim);

    std::vector<ag::Var> blocks;
    blocks.push_back(ag::gather_rows(tok_emb_, {static_cast<std::size_t>(kImgId)}));
    if (!in.visual.empty()) {
        Tensor vf({in.visual.size(), cfg_.visual_dim});
        for (std::size_t i = 0; i < in.visual.size(); ++i)
            for (std::size_t j = 0; j < cfg_.visual_dim; ++j) vf.at(i, j) = in.visual[i][j];
        blocks.push_back(ag::add(ag::matmul(ag::constant(std::move(vf)), vis_w_), vis_b_));
    }
    std::vector<std::size_t> text_idx;
    for (int id : in.text_ids) {
        require(id >= 0 && static_cast<std::size_t>(id) < cfg_.vocab_size, "token id ", id,
                " out of vocab of size ", cfg_.vocab_size);
        text_idx.push_back(static_cast<std::size_t>(id));
    }
    if (!text_idx.empty()) blocks.push_back(ag::gather_rows(tok_emb_, text_idx));

    ag::Var base = ag::concat_rows(blocks);
    std::vector<std::size_t> pos_idx(T), seg_idx(T);
    require(in.segments.size() == T, "assembled input: ", in.segments.size(), " segments for ", T,
            " positions");
    for (std::size_t t = 0; t < T; ++t) {
        pos_idx[t] = t;
        seg_idx[t] = static_cast<std::size_t>(in.segments[t]);
    }
    return ag::add(ag::add(base, ag::gather_rows(pos_emb_, pos_idx)),
                   ag::gather_rows(seg_emb_, seg_idx));
}

std::pair<ag::Var, ag::Var> attention_head(const ag::Var& x, const ag::Var& wq, const ag::Var& bq,
                                           const ag::Var& wk, const ag::Var& bk, const ag::Var& wv,
                                           const ag::Var& bv, const std::vector<bool>& keep) {
    const std::size_t dh = wq->value.cols();
    ag::Var q = ag::add(ag::matmul(x, wq), bq);
    ag::Var k = ag::add(ag::matmul(x, wk), bk);
    ag::Var v = ag::add(ag::matmul(x, wv), bv);
    ag::Var logits = ag::scale(ag::matmul(q, ag::transpose(k)),
                               1.0 / std::sqrt(static_cast<double>(dh)));
    ag::Var att = ag::masked_softmax_rows(logits, keep);
    return {ag::matmul(att, v), att};
}

EncoderOutput Encoder::encode(const AssembledInput& in) const {
    EncoderOutput out;
    out.seq_len = in.total_len();
    out.img_pos = 0;
    out.cls_pos = in.text_base();
    out.keep.assign(out.seq_len, true);
    for (std::size_t i = 0; i < in.text_ids.size(); ++i)
        if (in.text_ids[i] == kPadId) out.keep[in.text_base() + i] = false;

    ag::Var x = embed(in);
    for (const LayerParams& lp : layers_) {
        std::vector<ag::Var> head_values;
        std::vector<ag::Var> head_atts;
        for (const HeadParams& hp : lp.heads) {
            auto [y, att] = attention_head(x, hp.wq, hp.bq, hp.wk, hp.bk, hp.wv, hp.bv, out.keep);
            head_values.push_back(y);
            head_atts.push_back(att);
        }
        ag::Var fused = ag::add(ag::matmul(ag::concat_cols(head_values), lp.attn_out_w),
                                lp.attn_out_b);
        ag::Var mid = ag::layer_norm(ag::add(fused, x), lp.ln1_g, lp.ln1_b);
        ag::Var ff = ag::add(
            ag::matmul(ag::relu(ag::add(ag::matmul(mid, lp.ffn_w1), lp.ffn_b1)), lp.ffn_w2),
            lp.ffn_b2);
        x = ag::layer_norm(ag::add(ff, mid), lp.ln2_g, lp.ln2_b);
        out.head_out.push_back(std::move(head_values));
        out.attention.push_back(std::move(head_atts));
    }
    out.final = x;
    return out;
}

namespace {

void write_le(std::ostream& os, const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &data[i], 8);
        unsigned char buf[8];
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        os.write(reinterpret_cast<const char*>(buf), 8);
    }
}

void read_le(std::istream& is, double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char buf[8];
        is.read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
        std::memcpy(&data[i], &bits, 8);
    }
}

}  // namespace

void write_attention_dump(const std::string& path, const std::string& dialog_id,
                          const EncoderOutput& out) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open '", path, "' for writing");
    os << out.attention.size() << " " << (out.attention.empty() ? 0 : out.attention[0].size())
       << " " << out.seq_len << " " << dialog_id << "\n";
    for (const auto& layer : out.attention)
        for (const auto& att : layer) write_le(os, att->value.data(), att->value.numel());
    require(os.good(), "write failed for '", path, "'");
}

void write_mention_sidecar(const std::string& path, const Dialog& d, const AssembledInput& in) {
    std::ofstream os(path);
    require(os.good(), "cannot open '", path, "' for writing");
    for (const CoreferenceCluster& c : d.clusters)
        for (const Mention& m : c.mentions) {
            auto pos = in.position_of(m.span);
            require(pos.has_value(), "dialog '", d.id, "': cluster mention not in assembly");
            os << m.span.round << "\t" << m.span.start << "\t" << m.span.end << "\t" << pos->first
               << "\t" << pos->second << "\n";
        }
    require(os.good(), "write failed for '", path, "'");
}

AttentionDump read_attention_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open attention dump '", path, "'");
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    AttentionDump dump;
    hs >> dump.n_layers >> dump.n_heads >> dump.seq_len >> dump.dialog_id;
    require(!hs.fail(), "'", path, "': bad attention dump header '", header, "'");
    for (std::size_t l = 0; l < dump.n_layers; ++l) {
        std::vector<Tensor> heads;
        for (std::size_t k = 0; k < dump.n_heads; ++k) {
            Tensor t({dump.seq_len, dump.seq_len});
            read_le(is, t.data(), t.numel());
            require(is.good(), "'", path, "': truncated attention dump");
            heads.push_back(std::move(t));
        }
        dump.attention.push_back(std::move(heads));
    }
    return dump;
}

std::vector<std::pair<Span, std::pair<std::size_t, std::size_t>>> read_mention_sidecar(
    const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open sidecar '", path, "'");
    std::vector<std::pair<Span, std::pair<std::size_t, std::size_t>>> out;
    Span s;
    std::size_t lo, hi;
    while (is >> s.round >> s.start >> s.end >> lo >> hi) out.emplace_back(s, std::make_pair(lo, hi));
    return out;
}

}  // namespace vdpcr
