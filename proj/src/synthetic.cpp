#include "vdpcr/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <tuple>

#include "vdpcr/common.hpp"

namespace vdpcr {

namespace {

struct EntityClass {
    std::vector<std::string> nouns;
    std::string subject_pronoun;
    bool plural;
};

const std::array<EntityClass, 4>& entity_classes() {
    static const std::array<EntityClass, 4> classes = {{
        {{"boy", "man", "farmer", "clown"}, "he", false},
        {{"girl", "woman", "dancer", "teacher"}, "she", false},
        {{"bird", "kite", "ball", "boat", "lamp", "truck"}, "it", false},
        {{"dogs", "kids", "horses", "sheep"}, "they", true},
    }};
    return classes;
}

const std::vector<std::string>& colors() {
    static const std::vector<std::string> c = {"red",   "blue",  "green", "yellow",
                                               "black", "white", "brown", "pink"};
    return c;
}

const std::vector<std::string>& weathers() {
    static const std::vector<std::string> w = {"sunny", "rainy"};
    return w;
}

struct Entity {
    std::string noun;
    std::string color;
    std::string pronoun;
    bool plural;
    std::vector<Mention> noun_mentions;     // dialog order
    std::vector<Mention> pronoun_mentions;  // referential only
};

std::vector<double> visual_feature(std::uint64_t seed, const std::string& entity_id, int dim) {
    Rng rng(mix_seed(mix_seed(seed, 0x76697375ull), fnv1a(entity_id)));
    std::vector<double> f(static_cast<std::size_t>(dim));
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
    return f;
}

std::vector<std::string> color_answer(const Entity& e) {
    return {"the", e.noun, e.plural ? "are" : "is", e.color};
}

std::vector<std::string> color_answer_with(const Entity& e, const std::string& color) {
    return {"the", e.noun, e.plural ? "are" : "is", color};
}

bool precedes(const Span& a, const Span& b) {
    if (a.round != b.round) return a.round < b.round;
    return a.end < b.start;
}

// all noun mentions of both entities that strictly precede the pronoun
std::vector<Mention> candidate_mentions(const Entity& a, const Entity& b, const Span& pronoun) {
    std::vector<Mention> out;
    for (const Entity* e : {&a, &b})
        for (const Mention& m : e->noun_mentions)
            if (precedes(m.span, pronoun)) out.push_back(m);
    std::sort(out.begin(), out.end(), [](const Mention& x, const Mention& y) {
        return std::tie(x.span.round, x.span.start) < std::tie(y.span.round, y.span.start);
    });
    return out;
}

std::vector<int> antecedent_indices(const std::vector<Mention>& candidates, const Entity& ref,
                                    const Span& pronoun) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (const Mention& m : ref.noun_mentions)
            if (precedes(m.span, pronoun) && m.span == candidates[i].span)
                idx.push_back(static_cast<int>(i));
    return idx;
}

// Deterministic graded relevance for dense annotations.
double relevance_of(const std::vector<std::string>& cand, const std::vector<std::string>& gt,
                    bool weather_round) {
    if (cand == gt) return weather_round ? 0.9 : 0.8;
    if (weather_round) {
        if (!cand.empty() && !gt.empty() && cand[0] == gt[0]) return 0.3;  // same polarity
        return 0.0;
    }
    if (cand.size() != 4 || gt.size() != 4 || cand[0] != "the") return 0.0;
    if (cand[1] == gt[1]) return 0.2;  // right subject, wrong color
    if (cand[3] == gt[3]) return 0.4;  // right color, wrong subject
    return 0.0;
}

// GT plus distinct distractors, shuffled; returns (answers, gt_index).
std::pair<std::vector<std::vector<std::string>>, int> build_candidates(
    Rng& rng, const std::vector<std::string>& gt, std::vector<std::vector<std::string>> pool,
    int n_candidates) {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    pool.erase(std::remove(pool.begin(), pool.end(), gt), pool.end());
    rng.shuffle(pool);
    require(static_cast<int>(pool.size()) >= n_candidates - 1,
            "synthetic generator: distractor pool of ", pool.size(), " cannot fill ",
            n_candidates - 1, " slots");
    std::vector<std::vector<std::string>> answers(pool.begin(),
                                                  pool.begin() + (n_candidates - 1));
    const int gt_pos = rng.range(0, n_candidates - 1);
    answers.insert(answers.begin() + gt_pos, gt);
    return {std::move(answers), gt_pos};
}

std::vector<std::vector<std::string>> color_distractor_pool(const Entity& x, const Entity& y,
                                                            const std::string& weather) {
    std::vector<std::vector<std::string>> pool;
    for (const auto& c : colors())
        if (c != x.color) pool.push_back(color_answer_with(x, c));
    for (const auto& c : colors()) pool.push_back(color_answer_with(y, c));
    pool.push_back({"yes", "very", weather});
    pool.push_back({"no", "not", weather});
    pool.push_back({"not", "sure"});
    return pool;
}

}  // namespace

void SyntheticParams::validate() const {
    require(rounds_per_dialog >= 1, "rounds_per_dialog must be >= 1");
    require(candidates_per_round >= 2, "candidates_per_round must be >= 2");
    require(visual_dim >= 1, "visual_dim must be >= 1");
    for (double p : {pronoun_rate, referential_rate, caption_referent_rate, dense_round_fraction})
        require(p >= 0.0 && p <= 1.0, "rates must lie in [0,1]");
}

std::vector<Dialog> generate_synthetic(int n_dialogs, std::uint64_t seed,
                                       const SyntheticParams& params) {
    params.validate();
    require(n_dialogs >= 0, "n_dialogs must be >= 0");
    std::vector<Dialog> dialogs;
    dialogs.reserve(static_cast<std::size_t>(n_dialogs));

    for (int di = 0; di < n_dialogs; ++di) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(di)));
        Dialog d;
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "syn-%06d", di);
            d.id = buf;
        }

        // two entities of distinct classes; the pronoun of each is unambiguous
        const int class_a = rng.range(0, 3);
        int class_b = rng.range(0, 2);
        if (class_b >= class_a) ++class_b;
        const EntityClass& ca = entity_classes()[static_cast<std::size_t>(class_a)];
        const EntityClass& cb = entity_classes()[static_cast<std::size_t>(class_b)];
        Entity a{rng.pick(ca.nouns), rng.pick(colors()), ca.subject_pronoun, ca.plural, {}, {}};
        Entity b{rng.pick(cb.nouns), "", cb.subject_pronoun, cb.plural, {}, {}};
        do {
            b.color = rng.pick(colors());
        } while (b.color == a.color);
        const std::string weather = rng.pick(weathers());

        d.visual_features.push_back(visual_feature(seed, a.noun, params.visual_dim));
        d.visual_features.push_back(visual_feature(seed, b.noun, params.visual_dim));

        // caption introduces entity A
        d.caption = {"a", a.color, a.noun, "on", "a", weather, "day"};
        a.noun_mentions.push_back({Span{-1, 1, 2}, MentionKind::NounPhrase});

        struct PendingAnn {
            Mention pronoun;
            const Entity* referent;  // nullptr = non-referential
        };
        std::vector<PendingAnn> pending;

        for (int r = 0; r < params.rounds_per_dialog; ++r) {
            Round round;
            std::vector<std::string> gt;
            if (r == 0) {
                // fixed opener introduces entity B in its answer
                round.question = {"what", "is", "near", "the", a.noun};
                a.noun_mentions.push_back({Span{0, 4, 4}, MentionKind::NounPhrase});
                gt = {"a", b.color, b.noun, "is", "near"};
                std::vector<std::vector<std::string>> pool;
                for (const auto& c : colors()) {
                    if (c != b.color) pool.push_back({"a", c, b.noun, "is", "near"});
                    pool.push_back({"a", c, a.noun, "is", "near"});
                }
                auto [answers, gt_pos] =
                    build_candidates(rng, gt, std::move(pool), params.candidates_per_round);
                round.answers = std::move(answers);
                round.gt_index = gt_pos;
                const int q_len = static_cast<int>(round.question.size());
                b.noun_mentions.push_back({Span{0, q_len + 1, q_len + 2}, MentionKind::NounPhrase});
            } else if (rng.bernoulli(params.pronoun_rate)) {
                if (rng.bernoulli(params.referential_rate)) {
                    Entity& ref = rng.bernoulli(params.caption_referent_rate) ? a : b;
                    round.question = {"what", "color", ref.plural ? "are" : "is", ref.pronoun};
                    const Mention pm{Span{r, 3, 3}, MentionKind::Pronoun};
                    ref.pronoun_mentions.push_back(pm);
                    pending.push_back({pm, &ref});
                    gt = color_answer(ref);
                    auto [answers, gt_pos] = build_candidates(
                        rng, gt, color_distractor_pool(ref, &ref == &a ? b : a, weather),
                        params.candidates_per_round);
                    round.answers = std::move(answers);
                    round.gt_index = gt_pos;
                    const int q_len = static_cast<int>(round.question.size());
                    ref.noun_mentions.push_back(
                        {Span{r, q_len + 1, q_len + 1}, MentionKind::NounPhrase});
                } else if (rng.bernoulli(0.5)) {
                    // unresolvable: a pronoun whose gender/number class has no
                    // entity in this dialog, so there is nothing to refer to
                    int absent = rng.range(0, 1);
                    int picked = -1;
                    for (int g = 0; g < 4 && picked < 0; ++g)
                        if (g != class_a && g != class_b && absent-- == 0) picked = g;
                    const EntityClass& cls = entity_classes()[static_cast<std::size_t>(picked)];
                    round.question = {"what", "color", cls.plural ? "are" : "is",
                                      cls.subject_pronoun};
                    pending.push_back({Mention{Span{r, 3, 3}, MentionKind::Pronoun}, nullptr});
                    gt = {"not", "sure"};
                    std::vector<std::vector<std::string>> pool;
                    for (const auto& c : colors()) {
                        pool.push_back(color_answer_with(a, c));
                        pool.push_back(color_answer_with(b, c));
                    }
                    pool.push_back({"yes", "very", weather});
                    pool.push_back({"no", "not", weather});
                    auto [answers, gt_pos] =
                        build_candidates(rng, gt, std::move(pool), params.candidates_per_round);
                    round.answers = std::move(answers);
                    round.gt_index = gt_pos;
                } else {
                    const std::string asked = rng.pick(weathers());
                    round.question = {"is", "it", asked, "today"};
                    pending.push_back({Mention{Span{r, 1, 1}, MentionKind::Pronoun}, nullptr});
                    gt = asked == weather ? std::vector<std::string>{"yes", "very", weather}
                                          : std::vector<std::string>{"no", "not", asked};
                    std::vector<std::vector<std::string>> pool;
                    for (const auto& w : weathers()) {
                        pool.push_back({"yes", "very", w});
                        pool.push_back({"no", "not", w});
                    }
                    for (const auto& c : colors()) {
                        pool.push_back(color_answer_with(a, c));
                        pool.push_back(color_answer_with(b, c));
                    }
                    pool.push_back({"not", "sure"});
                    auto [answers, gt_pos] =
                        build_candidates(rng, gt, std::move(pool), params.candidates_per_round);
                    round.answers = std::move(answers);
                    round.gt_index = gt_pos;
                }
            } else {
                Entity& subj = rng.bernoulli(0.5) ? a : b;
                round.question = {"what", "color", subj.plural ? "are" : "is", "the", subj.noun};
                subj.noun_mentions.push_back({Span{r, 4, 4}, MentionKind::NounPhrase});
                gt = color_answer(subj);
                auto [answers, gt_pos] = build_candidates(
                    rng, gt, color_distractor_pool(subj, &subj == &a ? b : a, weather),
                    params.candidates_per_round);
                round.answers = std::move(answers);
                round.gt_index = gt_pos;
                const int q_len = static_cast<int>(round.question.size());
                subj.noun_mentions.push_back(
                    {Span{r, q_len + 1, q_len + 1}, MentionKind::NounPhrase});
            }
            d.rounds.push_back(std::move(round));
        }

        // one dense round per selected dialog
        if (rng.bernoulli(params.dense_round_fraction) && !d.rounds.empty()) {
            const int r = rng.range(0, static_cast<int>(d.rounds.size()) - 1);
            Round& round = d.rounds[static_cast<std::size_t>(r)];
            const auto& gt = round.answers[static_cast<std::size_t>(*round.gt_index)];
            const bool weather_round = !round.question.empty() && round.question[0] == "is";
            std::vector<double> scores;
            for (const auto& cand : round.answers)
                scores.push_back(relevance_of(cand, gt, weather_round));
            round.dense_scores = std::move(scores);
        }

        // gold annotations: candidates are every preceding noun mention
        for (const PendingAnn& p : pending) {
            CorefAnnotation ann;
            ann.pronoun = p.pronoun;
            ann.candidates = candidate_mentions(a, b, p.pronoun.span);
            ann.antecedents = p.referent
                                  ? antecedent_indices(ann.candidates, *p.referent, p.pronoun.span)
                                  : std::vector<int>{};
            ann.source = CorefSource::Gold;
            require(!p.referent || !ann.antecedents->empty(), "dialog '", d.id,
                    "': referential pronoun generated without visible antecedent");
            d.coref.push_back(std::move(ann));
        }

        for (const Entity* e : {&a, &b}) {
            CoreferenceCluster c;
            for (const Mention& m : e->noun_mentions) c.mentions.push_back(m);
            for (const Mention& m : e->pronoun_mentions) c.mentions.push_back(m);
            std::sort(c.mentions.begin(), c.mentions.end(), [](const Mention& x, const Mention& y) {
                return std::tie(x.span.round, x.span.start) < std::tie(y.span.round, y.span.start);
            });
            if (c.mentions.size() >= 2) d.clusters.push_back(std::move(c));
        }

        validate_dialog(d);
        dialogs.push_back(std::move(d));
    }
    return dialogs;
}

}  // namespace vdpcr
