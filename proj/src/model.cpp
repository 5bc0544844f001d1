#include "vdpcr/model.hpp"

#include <algorithm>

#include "vdpcr/common.hpp"

namespace vdpcr {

using nlohmann::ordered_json;

ordered_json ModelConfig::to_json() const {
    ordered_json j;
    j["n_layers"] = encoder.n_layers;
    j["n_heads"] = encoder.n_heads;
    j["model_dim"] = encoder.model_dim;
    j["ff_dim"] = encoder.ff_dim;
    j["max_positions"] = encoder.max_positions;
    j["vocab_size"] = encoder.vocab_size;
    j["visual_dim"] = encoder.visual_dim;
    j["pcr_mode"] = pcr_mode == PcrMode::LastLayer ? "last_layer" : "selected_heads";
    auto& heads = j["selected_heads"] = ordered_json::array();
    for (const HeadRef& h : selected_heads) heads.push_back(ordered_json::array({h.layer, h.head}));
    j["pcr_head_detached"] = pcr_head_detached;
    j["pcr_hidden"] = pcr_hidden;
    j["mask_rate"] = mask_rate;
    j["max_len"] = max_len;
    return j;
}

ModelConfig ModelConfig::from_json(const ordered_json& j) {
    ModelConfig cfg;
    cfg.encoder.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.encoder.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.encoder.model_dim = j.at("model_dim").get<std::size_t>();
    cfg.encoder.ff_dim = j.at("ff_dim").get<std::size_t>();
    cfg.encoder.max_positions = j.at("max_positions").get<std::size_t>();
    cfg.encoder.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.encoder.visual_dim = j.at("visual_dim").get<std::size_t>();
    const std::string mode = j.at("pcr_mode").get<std::string>();
    require(mode == "last_layer" || mode == "selected_heads", "bad pcr_mode '", mode, "'");
    cfg.pcr_mode = mode == "last_layer" ? PcrMode::LastLayer : PcrMode::SelectedHeads;
    for (const auto& h : j.at("selected_heads"))
        cfg.selected_heads.push_back({h.at(0).get<std::size_t>(), h.at(1).get<std::size_t>()});
    cfg.pcr_head_detached = j.at("pcr_head_detached").get<bool>();
    cfg.pcr_hidden = j.at("pcr_hidden").get<std::size_t>();
    cfg.mask_rate = j.at("mask_rate").get<double>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
    return cfg;
}

Model::Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), params_(seed) {
    cfg_.encoder.vocab_size = vocab_.size();
    require(cfg_.max_len <= cfg_.encoder.max_positions, "max_len ", cfg_.max_len,
            " exceeds encoder max_positions ", cfg_.encoder.max_positions);
    if (cfg_.pcr_mode == PcrMode::SelectedHeads && !cfg_.pcr_head_detached) {
        require(!cfg_.selected_heads.empty(), "selected-heads mode with no heads selected");
        for (const HeadRef& h : cfg_.selected_heads)
            require(h.layer < cfg_.encoder.n_layers && h.head < cfg_.encoder.n_heads,
                    "selected head (", h.layer, ",", h.head, ") outside a ", cfg_.encoder.n_layers,
                    "x", cfg_.encoder.n_heads, " encoder");
    }
    encoder_ = std::make_unique<Encoder>(params_, cfg_.encoder);
    const std::size_t d = cfg_.encoder.model_dim;
    nsp_head_.w = params_.create("nsp.w", {d, 2}, ParamInit::GlorotUniform);
    nsp_head_.b = params_.create("nsp.b", {2}, ParamInit::Zeros);
    mtm_head_.w = params_.create("mtm.w", {d, cfg_.encoder.vocab_size}, ParamInit::GlorotUniform);
    mtm_head_.b = params_.create("mtm.b", {cfg_.encoder.vocab_size}, ParamInit::Zeros);
    if (!cfg_.pcr_head_detached) {
        const std::size_t w =
            pcr_rep_width(cfg_.encoder, cfg_.pcr_mode,
                          cfg_.pcr_mode == PcrMode::SelectedHeads ? cfg_.selected_heads.size() : 1);
        PcrScorer s;
        s.w1 = params_.create("pcr.w1", {3 * w, cfg_.pcr_hidden}, ParamInit::GlorotUniform);
        s.b1 = params_.create("pcr.b1", {cfg_.pcr_hidden}, ParamInit::Zeros);
        s.w2 = params_.create("pcr.w2", {cfg_.pcr_hidden, 1}, ParamInit::GlorotUniform);
        s.b2 = params_.create("pcr.b2", {1}, ParamInit::Zeros);
        pcr_scorer_ = s;
    }
}

Model Model::from_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    ModelConfig cfg = ModelConfig::from_json(ckpt.meta.at("model"));
    Vocabulary vocab =
        Vocabulary::from_surfaces(ckpt.meta.at("vocab").get<std::vector<std::string>>());
    Model m(std::move(cfg), std::move(vocab), 0);
    auto loaded = load_into(m.params_, ckpt);
    require(loaded.size() == m.params_.size(), "checkpoint '", path, "' provides ", loaded.size(),
            " of ", m.params_.size(), " model parameters");
    return m;
}

void Model::save(const std::string& path) const {
    ordered_json meta;
    meta["model"] = cfg_.to_json();
    meta["vocab"] = vocab_.surfaces();
    save_checkpoint(path, params_, meta);
}

AssembledInput Model::assemble_round(const Dialog& d, int target_round, int candidate,
                                     const std::set<int>& kept) const {
    return assemble_input(d, vocab_, target_round, candidate, kept, cfg_.max_len);
}

AssembledInput Model::assemble_dialog(const Dialog& d) const {
    return assemble_full(d, vocab_, cfg_.max_len);
}

const PcrScorer& Model::pcr_scorer() const {
    require(pcr_scorer_.has_value(), "model was built with the PCR head detached");
    return *pcr_scorer_;
}

ag::Var Model::pcr_reps(const EncoderOutput& enc) const {
    return pcr_representation(enc, cfg_.pcr_mode, cfg_.selected_heads);
}

std::vector<Model::ScoredPronoun> Model::score_pronouns(const Dialog& d, const AssembledInput& in,
                                                        const EncoderOutput& enc) const {
    const PcrScorer& scorer = pcr_scorer();
    ag::Var reps = pcr_reps(enc);
    std::vector<ScoredPronoun> out;
    for (const CorefAnnotation& ann : d.coref) {
        auto ppos = in.position_of(ann.pronoun.span);
        if (!ppos) continue;
        bool all_candidates_present = true;
        std::vector<std::pair<std::size_t, std::size_t>> cpos;
        for (const Mention& c : ann.candidates) {
            auto pos = in.position_of(c.span);
            if (!pos) {
                all_candidates_present = false;
                break;
            }
            cpos.push_back(*pos);
        }
        if (!all_candidates_present) continue;
        ScoredPronoun sp;
        sp.ann = &ann;
        ag::Var xp = mention_rep(reps, ppos->first, ppos->second);
        for (const auto& [lo, hi] : cpos)
            sp.scores.push_back(vdpcr::pcr_score(scorer, xp, mention_rep(reps, lo, hi)));
        out.push_back(std::move(sp));
    }
    return out;
}

std::vector<std::vector<int>> Model::predict_antecedents(const Dialog& d) const {
    AssembledInput in = assemble_dialog(d);
    EncoderOutput enc = encode(in);
    auto scored = score_pronouns(d, in, enc);
    // assemble_full maps every annotation; keep the 1:1 correspondence
    require(scored.size() == d.coref.size(), "dialog '", d.id, "': scored ", scored.size(), " of ",
            d.coref.size(), " pronouns");
    std::vector<std::vector<int>> out;
    for (const auto& sp : scored) {
        std::vector<double> values;
        for (const ag::Var& s : sp.scores) values.push_back(s->value.item());
        out.push_back(pcr_predict(values));
    }
    return out;
}

NspOutput Model::nsp(const EncoderOutput& enc) const {
    return vdpcr::nsp_head(nsp_head_, ag::row(enc.final, enc.cls_pos),
                           ag::row(enc.final, enc.img_pos));
}

double Model::candidate_prob(const Dialog& d, int target_round, int candidate,
                             const std::set<int>& kept) const {
    AssembledInput in = assemble_round(d, target_round, candidate, kept);
    EncoderOutput enc = encode(in);
    return nsp(enc).p->value.item();
}

std::pair<AssembledInput, std::vector<MaskedToken>> Model::apply_mtm_mask(AssembledInput in,
                                                                          Rng& rng) const {
    std::vector<MaskedToken> masked;
    for (std::size_t i = 0; i < in.text_ids.size(); ++i) {
        if (in.text_ids[i] < kFirstRegularId) continue;  // specials and UNK stay
        if (!rng.bernoulli(cfg_.mask_rate)) continue;
        masked.push_back({in.text_base() + i, in.text_ids[i]});
        in.text_ids[i] = kMaskId;
    }
    return {std::move(in), std::move(masked)};
}

ag::Var Model::mtm(const EncoderOutput& enc, const std::vector<MaskedToken>& masked) const {
    return mtm_loss(mtm_head_, enc.final, masked);
}

}  // namespace vdpcr
