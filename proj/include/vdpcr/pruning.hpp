#pragma once

#include <optional>
#include <set>
#include <string>

#include "vdpcr/corpus.hpp"

namespace vdpcr {

enum class PruneRule { All, Crf, Cap, CrfCap };

std::string to_string(PruneRule rule);
PruneRule prune_rule_from_string(const std::string& name);

enum class SourceFilter { Gold, Pseudo, Any };
std::string to_string(SourceFilter f);
SourceFilter source_filter_from_string(const std::string& name);

struct RelevanceSet {
    int target_round = 0;
    std::set<int> relevant;  // -1 = caption; always earlier than target_round
};

// History rounds holding noun-phrase antecedents of referential pronouns in
// the target question. Empty when the question has no referential pronoun.
RelevanceSet relevant_rounds(const Dialog& d, int target_round, SourceFilter source);

// Kept history set for assemble_input; the target round itself is always
// appended by the assembly and never appears here.
std::set<int> prune(const Dialog& d, int target_round, PruneRule rule, SourceFilter source);

// Fraction of referential question pronouns with at least one caption
// antecedent; absent when the corpus has no referential question pronouns.
std::optional<double> caption_coverage(const std::vector<Dialog>& corpus, SourceFilter source);

}  // namespace vdpcr
