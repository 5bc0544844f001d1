#pragma once

#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "vdpcr/corpus.hpp"

namespace vdpcr {

// Segment ids used by the encoder's segment embedding.
inline constexpr int kSegVisual = 0;
inline constexpr int kSegHistory = 1;
inline constexpr int kSegTarget = 2;

// One encoder-ready sequence:
//   position 0        [IMG]
//   positions 1..M    visual feature tokens
//   position M+1      [CLS]
//   then kept utterances in original order, each followed by [SEP], ending
//   with the target question + candidate answer + [SEP].
struct AssembledInput {
    std::vector<int> text_ids;                        // textual part, [CLS]...[SEP]
    std::vector<int> segments;                        // length = total_len()
    std::vector<std::vector<double>> visual;          // M feature vectors
    int target_round = -1;                            // -1: full-dialog assembly
    int candidate = -1;

    struct Unit {
        int round;               // -1 = caption
        std::size_t base;        // absolute position of the unit's first token
        std::size_t q_len;       // caption length for round -1
        std::size_t a_len;       // answer tokens present in this unit
    };
    std::vector<Unit> units;

    std::size_t n_visual() const { return visual.size(); }
    std::size_t text_base() const { return 1 + visual.size(); }  // abs position of [CLS]
    std::size_t total_len() const { return text_base() + text_ids.size(); }

    // Absolute [start,end] of a mention span, if its tokens are present.
    std::optional<std::pair<std::size_t, std::size_t>> position_of(const Span& s) const;
    std::vector<std::size_t> positions_of(const Span& s) const;  // throws if absent
};

// kept_rounds may contain -1 for the caption; all members must precede
// target_round. The target round itself is always appended.
AssembledInput assemble_input(const Dialog& d, const Vocabulary& vocab, int target_round,
                              int candidate, const std::set<int>& kept_rounds,
                              std::size_t max_len);

// Whole dialog with ground-truth answers, no candidate appended. Used for
// coreference training and attention analysis.
AssembledInput assemble_full(const Dialog& d, const Vocabulary& vocab, std::size_t max_len);

std::set<int> all_history(const Dialog& d, int target_round);  // caption + all prior rounds

}  // namespace vdpcr
