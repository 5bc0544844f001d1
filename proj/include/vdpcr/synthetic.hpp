#pragma once

#include <cstdint>
#include <vector>

#include "vdpcr/corpus.hpp"

namespace vdpcr {

// Knobs for the synthetic dialog generator. Each dialog discusses two
// entities of distinct gender/number classes: one introduced by the caption,
// one by the first round's answer. Questions in later rounds either name an
// entity, refer to it with the class pronoun, or use a non-referential "it".
struct SyntheticParams {
    int rounds_per_dialog = 4;          // round 0 always introduces the second entity
    int candidates_per_round = 8;
    double pronoun_rate = 0.6;          // questions (rounds >= 1) that use a pronoun
    double referential_rate = 0.8;      // of those, fraction with a real referent
    double caption_referent_rate = 0.8; // referential pronouns aimed at the caption entity
    double dense_round_fraction = 0.3;  // dialogs given dense scores on one round
    int visual_dim = 8;

    void validate() const;
};

std::vector<Dialog> generate_synthetic(int n_dialogs, std::uint64_t seed,
                                       const SyntheticParams& params = {});

}  // namespace vdpcr
