#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vdpcr/checkpoint.hpp"
#include "vdpcr/common.hpp"
#include "vdpcr/corpus.hpp"
#include "vdpcr/encoder.hpp"
#include "vdpcr/taskheads.hpp"

namespace vdpcr {

struct ModelConfig {
    EncoderConfig encoder;
    PcrMode pcr_mode = PcrMode::LastLayer;
    std::vector<HeadRef> selected_heads;
    bool pcr_head_detached = false;
    std::size_t pcr_hidden = 64;
    double mask_rate = 0.15;
    std::size_t max_len = 256;

    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::ordered_json& j);
};

// Encoder + task heads over a fixed vocabulary. vocab_size in the encoder
// config is always taken from the vocabulary.
class Model {
public:
    Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed);

    static Model from_checkpoint(const std::string& path);
    void save(const std::string& path) const;

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Encoder& encoder() const { return *encoder_; }

    AssembledInput assemble_round(const Dialog& d, int target_round, int candidate,
                                  const std::set<int>& kept) const;
    AssembledInput assemble_dialog(const Dialog& d) const;
    EncoderOutput encode(const AssembledInput& in) const { return encoder_->encode(in); }

    // ---- PCR ----
    struct ScoredPronoun {
        const CorefAnnotation* ann;
        std::vector<ag::Var> scores;
    };
    // scores every annotation whose mentions are present in the assembly
    std::vector<ScoredPronoun> score_pronouns(const Dialog& d, const AssembledInput& in,
                                              const EncoderOutput& enc) const;
    std::vector<std::vector<int>> predict_antecedents(const Dialog& d) const;

    // ---- answer ranking ----
    NspOutput nsp(const EncoderOutput& enc) const;
    double candidate_prob(const Dialog& d, int target_round, int candidate,
                          const std::set<int>& kept) const;

    // ---- masked token modeling ----
    std::pair<AssembledInput, std::vector<MaskedToken>> apply_mtm_mask(AssembledInput in,
                                                                       Rng& rng) const;
    ag::Var mtm(const EncoderOutput& enc, const std::vector<MaskedToken>& masked) const;

    const PcrScorer& pcr_scorer() const;
    ag::Var pcr_reps(const EncoderOutput& enc) const;

private:
    ModelConfig cfg_;
    Vocabulary vocab_;
    ParamStore params_;
    std::unique_ptr<Encoder> encoder_;
    NspHead nsp_head_;
    MtmHead mtm_head_;
    std::optional<PcrScorer> pcr_scorer_;
};

}  // namespace vdpcr
