#include "vdpcr/assemble.hpp"

#include <algorithm>

#include "vdpcr/common.hpp"

namespace vdpcr {

std::optional<std::pair<std::size_t, std::size_t>> AssembledInput::position_of(
    const Span& s) const {
    for (const Unit& u : units) {
        if (u.round != s.round) continue;
        if (s.end >= static_cast<int>(u.q_len + u.a_len)) return std::nullopt;
        return std::make_pair(u.base + static_cast<std::size_t>(s.start),
                              u.base + static_cast<std::size_t>(s.end));
    }
    return std::nullopt;
}

std::vector<std::size_t> AssembledInput::positions_of(const Span& s) const {
    auto pos = position_of(s);
    require(pos.has_value(), "span (", s.round, ",", s.start, ",", s.end,
            ") has no position in the assembled input");
    std::vector<std::size_t> out;
    for (std::size_t p = pos->first; p <= pos->second; ++p) out.push_back(p);
    return out;
}

namespace {

struct Builder {
    const Dialog& d;
    const Vocabulary& vocab;
    AssembledInput out;
    std::vector<int> text_segments;

    explicit Builder(const Dialog& dd, const Vocabulary& v) : d(dd), vocab(v) {
        out.visual = d.visual_features;
        out.text_ids.push_back(kClsId);
        text_segments.push_back(kSegHistory);
    }

    std::size_t abs_pos() const { return out.text_base() + out.text_ids.size(); }

    void push_tokens(const std::vector<std::string>& tokens, int segment) {
        for (const auto& t : tokens) {
            out.text_ids.push_back(vocab.id(t));
            text_segments.push_back(segment);
        }
    }

    void push_sep(int segment) {
        out.text_ids.push_back(kSepId);
        text_segments.push_back(segment);
    }

    // history unit: caption, or question + ground-truth answer
    void push_history_unit(int round) {
        AssembledInput::Unit u;
        u.round = round;
        u.base = abs_pos();
        if (round == -1) {
            u.q_len = d.caption.size();
            u.a_len = 0;
            push_tokens(d.caption, kSegHistory);
        } else {
            const Round& r = d.rounds[static_cast<std::size_t>(round)];
            u.q_len = r.question.size();
            push_tokens(r.question, kSegHistory);
            u.a_len = 0;
            if (r.gt_index) {
                const auto& ans = r.answers[static_cast<std::size_t>(*r.gt_index)];
                u.a_len = ans.size();
                push_tokens(ans, kSegHistory);
            }
        }
        out.units.push_back(u);
        push_sep(kSegHistory);
    }

    void push_target_unit(int round, int candidate) {
        const Round& r = d.rounds[static_cast<std::size_t>(round)];
        require(candidate >= 0 && candidate < static_cast<int>(r.answers.size()), "dialog '", d.id,
                "': candidate ", candidate, " out of ", r.answers.size());
        AssembledInput::Unit u;
        u.round = round;
        u.base = abs_pos();
        u.q_len = r.question.size();
        push_tokens(r.question, kSegTarget);
        const auto& ans = r.answers[static_cast<std::size_t>(candidate)];
        // answer-part spans address ground-truth tokens; other candidates
        // leave them unmapped
        u.a_len = r.gt_index && candidate == *r.gt_index ? ans.size() : 0;
        push_tokens(ans, kSegTarget);
        out.units.push_back(u);
        push_sep(kSegTarget);
    }

    AssembledInput finish(std::size_t max_len) {
        out.segments.assign(out.text_base(), kSegVisual);
        out.segments.insert(out.segments.end(), text_segments.begin(), text_segments.end());
        require(out.total_len() <= max_len, "dialog '", d.id, "': assembled sequence of ",
                out.total_len(), " positions exceeds max length ", max_len);
        return std::move(out);
    }
};

}  // namespace

AssembledInput assemble_input(const Dialog& d, const Vocabulary& vocab, int target_round,
                              int candidate, const std::set<int>& kept_rounds,
                              std::size_t max_len) {
    require(target_round >= 0 && target_round < static_cast<int>(d.rounds.size()), "dialog '",
            d.id, "': target round ", target_round, " out of range");
    for (int r : kept_rounds)
        require(r >= -1 && r < target_round, "dialog '", d.id, "': kept round ", r,
                " does not precede target round ", target_round);

    Builder b(d, vocab);
    for (int r : kept_rounds) b.push_history_unit(r);  // std::set iterates ascending; -1 first
    b.push_target_unit(target_round, candidate);
    AssembledInput out = b.finish(max_len);
    out.target_round = target_round;
    out.candidate = candidate;
    return out;
}

AssembledInput assemble_full(const Dialog& d, const Vocabulary& vocab, std::size_t max_len) {
    Builder b(d, vocab);
    b.push_history_unit(-1);
    for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) b.push_history_unit(r);
    return b.finish(max_len);
}

std::set<int> all_history(const Dialog& d, int target_round) {
    std::set<int> kept{-1};
    for (int r = 0; r < target_round; ++r) kept.insert(r);
    (void)d;
    return kept;
}

}  // namespace vdpcr
