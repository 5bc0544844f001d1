#include "vdpcr/pruning.hpp"

#include "vdpcr/common.hpp"

namespace vdpcr {

std::string to_string(PruneRule rule) {
    switch (rule) {
        case PruneRule::All: return "all";
        case PruneRule::Crf: return "crf";
        case PruneRule::Cap: return "cap";
        case PruneRule::CrfCap: return "crf+cap";
    }
    fail("bad prune rule");
}

PruneRule prune_rule_from_string(const std::string& name) {
    if (name == "all") return PruneRule::All;
    if (name == "crf") return PruneRule::Crf;
    if (name == "cap") return PruneRule::Cap;
    if (name == "crf+cap" || name == "crfcap") return PruneRule::CrfCap;
    fail("unknown prune rule '", name, "' (expected all|crf|cap|crf+cap)");
}

std::string to_string(SourceFilter f) {
    switch (f) {
        case SourceFilter::Gold: return "gold";
        case SourceFilter::Pseudo: return "pseudo";
        case SourceFilter::Any: return "any";
    }
    fail("bad source filter");
}

SourceFilter source_filter_from_string(const std::string& name) {
    if (name == "gold") return SourceFilter::Gold;
    if (name == "pseudo") return SourceFilter::Pseudo;
    if (name == "any") return SourceFilter::Any;
    fail("unknown coref source '", name, "' (expected gold|pseudo|any)");
}

namespace {

bool source_matches(CorefSource s, SourceFilter f) {
    if (f == SourceFilter::Any) return true;
    return (f == SourceFilter::Gold) == (s == CorefSource::Gold);
}

// pronoun sits in the question part of the target round
bool is_question_pronoun(const Dialog& d, const CorefAnnotation& ann, int round) {
    if (ann.pronoun.span.round != round) return false;
    if (round == -1) return false;
    const auto& q = d.rounds[static_cast<std::size_t>(round)].question;
    return ann.pronoun.span.end < static_cast<int>(q.size());
}

}  // namespace

RelevanceSet relevant_rounds(const Dialog& d, int target_round, SourceFilter source) {
    require(target_round >= 0 && target_round < static_cast<int>(d.rounds.size()), "dialog '",
            d.id, "': target round ", target_round, " out of range");
    RelevanceSet rel;
    rel.target_round = target_round;
    for (const CorefAnnotation& ann : d.coref) {
        if (!source_matches(ann.source, source)) continue;
        if (!is_question_pronoun(d, ann, target_round)) continue;
        if (!ann.referential()) continue;
        for (int idx : *ann.antecedents) {
            const int r = ann.candidates[static_cast<std::size_t>(idx)].span.round;
            if (r < target_round) rel.relevant.insert(r);
        }
    }
    return rel;
}

std::set<int> prune(const Dialog& d, int target_round, PruneRule rule, SourceFilter source) {
    std::set<int> kept;
    switch (rule) {
        case PruneRule::All:
            kept.insert(-1);
            for (int r = 0; r < target_round; ++r) kept.insert(r);
            break;
        case PruneRule::Crf:
            kept = relevant_rounds(d, target_round, source).relevant;
            break;
        case PruneRule::Cap:
            kept.insert(-1);
            break;
        case PruneRule::CrfCap:
            kept = relevant_rounds(d, target_round, source).relevant;
            kept.insert(-1);
            break;
    }
    return kept;
}

std::optional<double> caption_coverage(const std::vector<Dialog>& corpus, SourceFilter source) {
    std::size_t referential = 0, with_caption_antecedent = 0;
    for (const Dialog& d : corpus)
        for (const CorefAnnotation& ann : d.coref) {
            if (!source_matches(ann.source, source)) continue;
            if (ann.pronoun.span.round < 0) continue;
            if (!is_question_pronoun(d, ann, ann.pronoun.span.round)) continue;
            if (!ann.referential()) continue;
            ++referential;
            for (int idx : *ann.antecedents)
                if (ann.candidates[static_cast<std::size_t>(idx)].span.round == -1) {
                    ++with_caption_antecedent;
                    break;
                }
        }
    if (referential == 0) return std::nullopt;
    return static_cast<double>(with_caption_antecedent) / static_cast<double>(referential);
}

}  // namespace vdpcr
