#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "vdpcr/assemble.hpp"
#include "vdpcr/pruning.hpp"
#include "vdpcr/synthetic.hpp"

using namespace vdpcr;

namespace {

// Dialog mirroring the bird example: the pronoun in the third question refers
// to a noun phrase introduced by the second round's answer.
Dialog bird_dialog() {
    Dialog d;
    d.id = "bird";
    d.visual_features = {{0.1, 0.2}};
    d.caption = tokenize("a man on a bench");
    auto round = [](const char* q, const char* a) {
        Round r;
        r.question = tokenize(q);
        r.answers = {tokenize(a), tokenize("no")};
        r.gt_index = 0;
        return r;
    };
    d.rounds.push_back(round("is the man young", "yes he is young"));
    d.rounds.push_back(round("what else is there", "a bird on a branch"));
    d.rounds.push_back(round("what color is it", "the bird is brown"));

    // "it" at offset 3 of the third question; "bird" at offset 5 of round 1
    // (question has 4 tokens, answer token 1)
    CorefAnnotation ann;
    ann.pronoun = {Span{2, 3, 3}, MentionKind::Pronoun};
    ann.candidates = {{Span{-1, 1, 1}, MentionKind::NounPhrase},
                      {Span{1, 5, 5}, MentionKind::NounPhrase}};
    ann.antecedents = std::vector<int>{1};
    d.coref.push_back(ann);
    d.clusters.push_back({{ann.candidates[1], ann.pronoun}});
    validate_dialog(d);
    return d;
}

// Dialog mirroring the court example: the pronoun in the fourth question has
// antecedents in the caption and in the third question.
Dialog court_dialog() {
    Dialog d;
    d.id = "court";
    d.visual_features = {{0.3, 0.4}};
    d.caption = tokenize("a boy on the court");
    auto round = [](const char* q, const char* a) {
        Round r;
        r.question = tokenize(q);
        r.answers = {tokenize(a), tokenize("no")};
        r.gt_index = 0;
        return r;
    };
    d.rounds.push_back(round("is the boy young", "yes"));
    d.rounds.push_back(round("is he wearing shorts", "yes"));
    d.rounds.push_back(round("what color is the court", "the court is green"));
    d.rounds.push_back(round("is there a fence around it", "yes"));

    CorefAnnotation ann;
    ann.pronoun = {Span{3, 5, 5}, MentionKind::Pronoun};
    ann.candidates = {{Span{-1, 4, 4}, MentionKind::NounPhrase},   // caption court
                      {Span{-1, 1, 1}, MentionKind::NounPhrase},   // caption boy
                      {Span{2, 5, 5}, MentionKind::NounPhrase}};   // court in the 3rd question
    std::sort(ann.candidates.begin(), ann.candidates.end(), [](const Mention& a, const Mention& b) {
        return std::tie(a.span.round, a.span.start) < std::tie(b.span.round, b.span.start);
    });
    ann.antecedents = std::vector<int>{};
    CoreferenceCluster court_cluster;
    for (std::size_t i = 0; i < ann.candidates.size(); ++i)
        if (ann.candidates[i].span.start != 1) {  // both "court" mentions
            ann.antecedents->push_back(static_cast<int>(i));
            court_cluster.mentions.push_back(ann.candidates[i]);
        }
    court_cluster.mentions.push_back(ann.pronoun);
    d.coref.push_back(ann);
    d.clusters.push_back(std::move(court_cluster));
    validate_dialog(d);
    return d;
}

std::vector<std::string> unit_surfaces(const Dialog& d, const AssembledInput& in,
                                       const Vocabulary& vocab) {
    // text split back into units at separators, for readable comparisons
    std::vector<std::string> units;
    std::string cur;
    for (std::size_t i = 1; i < in.text_ids.size(); ++i) {  // skip [CLS]
        const std::string& s = vocab.surface(in.text_ids[i]);
        if (s == "[SEP]") {
            units.push_back(cur);
            cur.clear();
        } else {
            if (!cur.empty()) cur += ' ';
            cur += s;
        }
    }
    (void)d;
    return units;
}

}  // namespace

TEST_CASE("relevance follows the pronoun antecedents") {
    SUBCASE("antecedent in a previous answer keeps that round") {
        Dialog d = bird_dialog();
        RelevanceSet rel = relevant_rounds(d, 2, SourceFilter::Gold);
        CHECK(rel.relevant == std::set<int>{1});
    }
    SUBCASE("antecedents in caption and an earlier question keep both") {
        Dialog d = court_dialog();
        RelevanceSet rel = relevant_rounds(d, 3, SourceFilter::Gold);
        CHECK(rel.relevant == std::set<int>{-1, 2});
    }
    SUBCASE("a question without a referential pronoun is self-contained") {
        Dialog d = bird_dialog();
        CHECK(relevant_rounds(d, 1, SourceFilter::Gold).relevant.empty());
    }
    SUBCASE("the source filter hides annotations of the other provenance") {
        Dialog d = bird_dialog();
        CHECK(relevant_rounds(d, 2, SourceFilter::Pseudo).relevant.empty());
        CHECK(relevant_rounds(d, 2, SourceFilter::Any).relevant == std::set<int>{1});
    }
}

TEST_CASE("the four rules reproduce the reference pruning table") {
    Dialog d = bird_dialog();
    const int target = 2;
    CHECK(prune(d, target, PruneRule::All, SourceFilter::Gold) == std::set<int>{-1, 0, 1});
    CHECK(prune(d, target, PruneRule::Crf, SourceFilter::Gold) == std::set<int>{1});
    CHECK(prune(d, target, PruneRule::Cap, SourceFilter::Gold) == std::set<int>{-1});
    CHECK(prune(d, target, PruneRule::CrfCap, SourceFilter::Gold) == std::set<int>{-1, 1});

    // assembled unit sequences spell out the same table
    Vocabulary vocab = build_vocabulary({d});
    auto units_for = [&](PruneRule rule) {
        AssembledInput in = assemble_input(d, vocab, target, 0,
                                           prune(d, target, rule, SourceFilter::Gold), 256);
        return unit_surfaces(d, in, vocab);
    };
    const std::string cap = "a man on a bench";
    const std::string q1a1 = "is the man young yes he is young";
    const std::string q2a2 = "what else is there a bird on a branch";
    const std::string q3cand = "what color is it the bird is brown";
    CHECK(units_for(PruneRule::CrfCap) == std::vector<std::string>{cap, q2a2, q3cand});
    CHECK(units_for(PruneRule::Crf) == std::vector<std::string>{q2a2, q3cand});
    CHECK(units_for(PruneRule::Cap) == std::vector<std::string>{cap, q3cand});
    CHECK(units_for(PruneRule::All) == std::vector<std::string>{cap, q1a1, q2a2, q3cand});
}

TEST_CASE("a pronoun-free question under the coreference rule keeps only the target round") {
    Dialog d = bird_dialog();
    CHECK(prune(d, 1, PruneRule::Crf, SourceFilter::Gold).empty());
    Vocabulary vocab = build_vocabulary({d});
    AssembledInput in =
        assemble_input(d, vocab, 1, 0, prune(d, 1, PruneRule::Crf, SourceFilter::Gold), 256);
    CHECK(unit_surfaces(d, in, vocab) ==
          std::vector<std::string>{"what else is there a bird on a branch"});
}

TEST_CASE("rule lattice monotonicity holds on random synthetic rounds") {
    auto dialogs = generate_synthetic(250, 77);
    std::size_t checked = 0;
    for (const Dialog& d : dialogs)
        for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) {
            const auto all = prune(d, r, PruneRule::All, SourceFilter::Gold);
            const auto crf = prune(d, r, PruneRule::Crf, SourceFilter::Gold);
            const auto cap = prune(d, r, PruneRule::Cap, SourceFilter::Gold);
            const auto crfcap = prune(d, r, PruneRule::CrfCap, SourceFilter::Gold);
            CHECK(std::includes(crfcap.begin(), crfcap.end(), cap.begin(), cap.end()));
            CHECK(std::includes(crfcap.begin(), crfcap.end(), crf.begin(), crf.end()));
            CHECK(std::includes(all.begin(), all.end(), crfcap.begin(), crfcap.end()));
            for (int kept : all) CHECK(kept < r);
            ++checked;
        }
    CHECK(checked >= 1000);
}

TEST_CASE("gold antecedents always fit inside the caption+coreference assembly") {
    auto dialogs = generate_synthetic(80, 91);
    Vocabulary vocab = build_vocabulary(dialogs);
    for (const Dialog& d : dialogs)
        for (const CorefAnnotation& ann : d.coref) {
            if (!ann.referential()) continue;
            const int target = ann.pronoun.span.round;
            const auto& q = d.rounds[static_cast<std::size_t>(target)].question;
            if (ann.pronoun.span.end >= static_cast<int>(q.size())) continue;
            AssembledInput in = assemble_input(
                d, vocab, target, *d.rounds[static_cast<std::size_t>(target)].gt_index,
                prune(d, target, PruneRule::CrfCap, SourceFilter::Gold), 256);
            for (int idx : *ann.antecedents)
                CHECK(in.position_of(ann.candidates[static_cast<std::size_t>(idx)].span)
                          .has_value());
        }
}

TEST_CASE("caption coverage") {
    SUBCASE("all antecedents in the caption") {
        Dialog d = court_dialog();
        auto cov = caption_coverage({d}, SourceFilter::Gold);
        REQUIRE(cov.has_value());
        CHECK(*cov == 1.0);
    }
    SUBCASE("no caption antecedents") {
        Dialog d = bird_dialog();
        auto cov = caption_coverage({d}, SourceFilter::Gold);
        REQUIRE(cov.has_value());
        CHECK(*cov == 0.0);
    }
    SUBCASE("no question pronouns reports absent") {
        Dialog d = bird_dialog();
        d.coref.clear();
        d.clusters.clear();
        CHECK(!caption_coverage({d}, SourceFilter::Gold).has_value());
    }
    SUBCASE("generator-controlled rate is recovered within 0.03") {
        SyntheticParams params;
        params.caption_referent_rate = 0.8;
        auto dialogs = generate_synthetic(900, 13, params);
        std::size_t n_ref = 0;
        for (const Dialog& d : dialogs)
            for (const CorefAnnotation& ann : d.coref)
                if (ann.referential()) ++n_ref;
        REQUIRE(n_ref >= 1000);
        auto cov = caption_coverage(dialogs, SourceFilter::Gold);
        REQUIRE(cov.has_value());
        CHECK(*cov == doctest::Approx(0.80).epsilon(0.03 / 0.80));
    }
}

TEST_CASE("rule names round-trip") {
    for (PruneRule rule :
         {PruneRule::All, PruneRule::Crf, PruneRule::Cap, PruneRule::CrfCap})
        CHECK(prune_rule_from_string(to_string(rule)) == rule);
    CHECK_THROWS(prune_rule_from_string("bogus"));
}
