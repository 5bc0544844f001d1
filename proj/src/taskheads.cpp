#include "vdpcr/taskheads.hpp"

#include <algorithm>
#include <cmath>

#include "vdpcr/common.hpp"

namespace vdpcr {

ag::Var pcr_score(const PcrScorer& scorer, const ag::Var& x_pronoun, const ag::Var& x_candidate) {
    require(x_pronoun->value.cols() == x_candidate->value.cols(),
            "pcr_score: representation widths differ, ", x_pronoun->value.shape_str(), " vs ",
            x_candidate->value.shape_str());
    ag::Var fused = ag::concat_cols({x_pronoun, x_candidate, ag::mul(x_pronoun, x_candidate)});
    ag::Var hidden = ag::relu(ag::add(ag::matmul(fused, scorer.w1), scorer.b1));
    return ag::pick(ag::add(ag::matmul(hidden, scorer.w2), scorer.b2), 0, 0);
}

ag::Var pcr_loss(const std::vector<PronounScores>& batch) {
    std::vector<ag::Var> terms;
    const ag::Var null_score = ag::constant(Tensor::scalar(0.0));
    for (const PronounScores& p : batch) {
        require(p.antecedents.has_value(), "pcr_loss: unlabeled pronoun in batch");
        require(p.antecedents->empty() || !p.scores.empty(),
                "pcr_loss: referential pronoun with empty candidate list");
        std::vector<ag::Var> denom = p.scores;
        denom.push_back(null_score);
        std::vector<ag::Var> numer;
        if (p.antecedents->empty()) {
            numer.push_back(null_score);  // non-referential: correct outcome is null
        } else {
            for (int idx : *p.antecedents) {
                require(idx >= 0 && idx < static_cast<int>(p.scores.size()),
                        "pcr_loss: antecedent index ", idx, " out of ", p.scores.size());
                numer.push_back(p.scores[static_cast<std::size_t>(idx)]);
            }
        }
        ag::Var term = ag::sub(ag::logsumexp(ag::stack_scalars(denom)),
                               ag::logsumexp(ag::stack_scalars(numer)));
        terms.push_back(term);
    }
    if (terms.empty()) return ag::constant(Tensor::scalar(0.0));
    return ag::sum(ag::stack_scalars(terms));
}

std::vector<int> pcr_predict(const std::vector<double>& candidate_scores) {
    std::vector<int> out;
    for (std::size_t i = 0; i < candidate_scores.size(); ++i)
        if (candidate_scores[i] > 0.0) out.push_back(static_cast<int>(i));
    return out;
}

NspOutput nsp_head(const NspHead& head, const ag::Var& x_cls, const ag::Var& x_img) {
    NspOutput out;
    out.logits = ag::add(ag::matmul(ag::mul(x_cls, x_img), head.w), head.b);
    ag::Var probs = ag::softmax_rows(out.logits);
    out.p = ag::pick(probs, 0, 0);
    out.pbar = ag::pick(probs, 0, 1);
    return out;
}

ag::Var nsp_loss(const std::vector<std::pair<NspOutput, int>>& batch) {
    // -[l log p + (1-l) log pbar], evaluated from the logits for stability:
    // -log softmax(logits)[l] = logsumexp(logits) - logits[l]
    std::vector<ag::Var> terms;
    for (const auto& [out, label] : batch) {
        require(label == 0 || label == 1, "nsp_loss: label ", label, " not in {0,1}");
        const std::size_t col = label == 1 ? 0 : 1;
        terms.push_back(ag::sub(ag::logsumexp(out.logits), ag::pick(out.logits, 0, col)));
    }
    if (terms.empty()) return ag::constant(Tensor::scalar(0.0));
    return ag::sum(ag::stack_scalars(terms));
}

ag::Var mtm_loss(const MtmHead& head, const ag::Var& final_reps,
                 const std::vector<MaskedToken>& masked) {
    if (masked.empty()) return ag::constant(Tensor::scalar(0.0));
    std::vector<ag::Var> terms;
    for (const MaskedToken& m : masked) {
        ag::Var logits = ag::add(ag::matmul(ag::row(final_reps, m.position), head.w), head.b);
        terms.push_back(ag::sub(ag::logsumexp(logits),
                                ag::pick(logits, 0, static_cast<std::size_t>(m.original_id))));
    }
    return ag::sum(ag::stack_scalars(terms));
}

ag::Var joint_loss(const std::optional<ag::Var>& nsp, const std::optional<ag::Var>& mtm,
                   const std::optional<ag::Var>& pcr, const LossWeights& weights) {
    require(weights.nsp >= 0 && weights.mtm >= 0 && weights.pcr >= 0,
            "joint_loss: coefficients must be >= 0");
    std::vector<ag::Var> terms;
    if (weights.nsp != 0.0 && nsp) terms.push_back(ag::scale(*nsp, weights.nsp));
    if (weights.mtm != 0.0 && mtm) terms.push_back(ag::scale(*mtm, weights.mtm));
    if (weights.pcr != 0.0 && pcr) terms.push_back(ag::scale(*pcr, weights.pcr));
    if (terms.empty()) return ag::constant(Tensor::scalar(0.0));
    return ag::sum(ag::stack_scalars(terms));
}

ag::Var phase2_loss(const std::vector<ag::Var>& candidate_probs,
                    const std::vector<double>& relevance) {
    require(!candidate_probs.empty(), "phase2_loss: no candidates");
    require(candidate_probs.size() == relevance.size(), "phase2_loss: ", candidate_probs.size(),
            " probabilities for ", relevance.size(), " relevance scores");
    // normalized targets; shifting all raw scores by a constant cancels here
    double mx = *std::max_element(relevance.begin(), relevance.end());
    double z = 0.0;
    std::vector<double> rhat(relevance.size());
    for (std::size_t i = 0; i < relevance.size(); ++i) z += std::exp(relevance[i] - mx);
    for (std::size_t i = 0; i < relevance.size(); ++i)
        rhat[i] = std::exp(relevance[i] - mx) / z;
    ag::Var p_vec = ag::stack_scalars(candidate_probs);
    // -sum_j rhat_j log phat_j = logsumexp(p) - sum_j rhat_j p_j
    return ag::sub(ag::logsumexp(p_vec),
                   ag::sum(ag::mul(p_vec, ag::constant(Tensor::from_vector(std::move(rhat))))));
}

ag::Var pcr_representation(const EncoderOutput& enc, PcrMode mode,
                           const std::vector<HeadRef>& selected) {
    if (mode == PcrMode::LastLayer) return enc.final;
    require(!selected.empty(), "pcr_representation: no heads selected");
    std::vector<ag::Var> parts;
    for (const HeadRef& h : selected) {
        require(h.layer < enc.head_out.size() && h.head < enc.head_out[h.layer].size(),
                "pcr_representation: head (", h.layer, ",", h.head, ") does not exist");
        parts.push_back(enc.head_out[h.layer][h.head]);
    }
    return ag::concat_cols(parts);
}

std::size_t pcr_rep_width(const EncoderConfig& cfg, PcrMode mode, std::size_t n_selected) {
    if (mode == PcrMode::LastLayer) return cfg.model_dim;
    require(n_selected > 0, "pcr_rep_width: no heads selected");
    return n_selected * cfg.head_dim();
}

ag::Var mention_rep(const ag::Var& token_reps, std::size_t abs_start, std::size_t abs_end) {
    require(abs_start <= abs_end && abs_end < token_reps->value.rows(), "mention_rep: span [",
            abs_start, ",", abs_end, "] out of ", token_reps->value.rows(), " rows");
    std::vector<std::size_t> idx;
    for (std::size_t p = abs_start; p <= abs_end; ++p) idx.push_back(p);
    return ag::mean_rows(token_reps, idx);
}

}  // namespace vdpcr
