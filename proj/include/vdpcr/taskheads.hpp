#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "vdpcr/autograd.hpp"
#include "vdpcr/encoder.hpp"

namespace vdpcr {

enum class PcrMode { LastLayer, SelectedHeads };

struct HeadRef {
    std::size_t layer = 0;
    std::size_t head = 0;

    friend bool operator==(const HeadRef&, const HeadRef&) = default;
    friend auto operator<=>(const HeadRef&, const HeadRef&) = default;
};

// Coreference scorer: two linear layers with a relu between, scalar output.
// Input is concat(x_p, x_n, x_p * x_n), so w1 has 3 * rep_width input rows.
struct PcrScorer {
    ag::Var w1, b1, w2, b2;
};

ag::Var pcr_score(const PcrScorer& scorer, const ag::Var& x_pronoun, const ag::Var& x_candidate);

// One pronoun's candidate scores plus its supervision. The null antecedent is
// a fixed 0 score included in every denominator; non-referential pronouns use
// {null} as the positive set.
struct PronounScores {
    std::vector<ag::Var> scores;                   // candidate order of the annotation
    std::optional<std::vector<int>> antecedents;   // required for pcr_loss
};

ag::Var pcr_loss(const std::vector<PronounScores>& batch);

// predicted antecedent set: candidates scoring above the null score (0)
std::vector<int> pcr_predict(const std::vector<double>& candidate_scores);

// Answer discrimination head: one linear layer on x_cls * x_img.
struct NspHead {
    ag::Var w, b;  // [d x 2], [2]
};

struct NspOutput {
    ag::Var logits;  // [1 x 2]
    ag::Var p, pbar;  // complementary probabilities, p + pbar = 1
};

NspOutput nsp_head(const NspHead& head, const ag::Var& x_cls, const ag::Var& x_img);
ag::Var nsp_loss(const std::vector<std::pair<NspOutput, int>>& batch);

// Masked-token head: one linear layer from final reps to vocabulary logits.
struct MtmHead {
    ag::Var w, b;  // [d x vocab], [vocab]
};

struct MaskedToken {
    std::size_t position;  // absolute sequence position
    int original_id;
};

ag::Var mtm_loss(const MtmHead& head, const ag::Var& final_reps,
                 const std::vector<MaskedToken>& masked);

struct LossWeights {
    double nsp = 1.0;
    double mtm = 1.0;
    double pcr = 0.1;
};

// Weighted sum; a zero coefficient skips its term entirely, so a run with
// pcr weight 0 never evaluates the PCR branch.
ag::Var joint_loss(const std::optional<ag::Var>& nsp, const std::optional<ag::Var>& mtm,
                   const std::optional<ag::Var>& pcr, const LossWeights& weights);

// Cross-entropy between softmax-normalized candidate probabilities and
// softmax-normalized relevance scores.
ag::Var phase2_loss(const std::vector<ag::Var>& candidate_probs,
                    const std::vector<double>& relevance);

// Token representation feeding mention pooling: the final layer, or the
// concatenated outputs of the selected heads.
ag::Var pcr_representation(const EncoderOutput& enc, PcrMode mode,
                           const std::vector<HeadRef>& selected);
std::size_t pcr_rep_width(const EncoderConfig& cfg, PcrMode mode, std::size_t n_selected);

// mean pooling over the mention's token rows
ag::Var mention_rep(const ag::Var& token_reps, std::size_t abs_start, std::size_t abs_end);

}  // namespace vdpcr
