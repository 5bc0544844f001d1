#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vdpcr/common.hpp"
#include "vdpcr/metrics.hpp"
#include "support/reference_metrics.hpp"

using namespace vdpcr;

TEST_CASE("pair classification metrics") {
    auto pair = [](std::int64_t p, std::int64_t c) { return std::make_pair(p, c); };

    SUBCASE("perfect prediction") {
        PairSet gold{pair(0, 1), pair(0, 2), pair(1, 0)};
        PRF m = pcr_prf(gold, gold);
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }
    SUBCASE("empty prediction against non-empty gold") {
        PairSet gold{pair(0, 1)};
        PRF m = pcr_prf({}, gold);
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SUBCASE("known confusion counts") {
        // 85 true positives, 10 false positives, 15 false negatives
        PairSet pred, gold;
        for (int i = 0; i < 85; ++i) {
            pred.insert(pair(i, 0));
            gold.insert(pair(i, 0));
        }
        for (int i = 0; i < 10; ++i) pred.insert(pair(1000 + i, 0));
        for (int i = 0; i < 15; ++i) gold.insert(pair(2000 + i, 0));
        PRF m = pcr_prf(pred, gold);
        CHECK(m.precision == doctest::Approx(0.894736842).epsilon(1e-6));
        CHECK(m.recall == doctest::Approx(0.85).epsilon(1e-9));
        CHECK(m.f1 == doctest::Approx(0.871794871).epsilon(1e-6));
    }
    SUBCASE("both empty") {
        PRF m = pcr_prf({}, {});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
}

TEST_CASE("rank_of") {
    SUBCASE("unique maximum at the target ranks first") {
        CHECK(rank_of({0.1, 0.9, 0.3}, 1) == 1);
    }
    SUBCASE("all-equal scores rank by candidate index") {
        const std::vector<double> flat(7, 0.5);
        for (std::size_t t = 0; t < flat.size(); ++t) CHECK(rank_of(flat, t) == t + 1);
    }
    SUBCASE("random scores match the sort oracle") {
        Rng rng(5);
        for (int rep = 0; rep < 200; ++rep) {
            const int n = rng.range(1, 30);
            std::vector<double> scores(n);
            for (double& s : scores) s = rng.range(0, 9) / 10.0;  // force ties
            const auto target = rng.below(scores.size());
            CHECK(rank_of(scores, target) == refmetrics::rank_of(scores, target));
        }
    }
}

TEST_CASE("retrieval metrics closed forms") {
    SUBCASE("ranks 1, 2, 4") {
        RetrievalMetrics m = retrieval_metrics_from_ranks({1, 2, 4});
        CHECK(m.mrr == doctest::Approx((1.0 + 0.5 + 0.25) / 3).epsilon(1e-12));
        CHECK(m.r_at_1 == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(m.mean_rank == doctest::Approx(7.0 / 3).epsilon(1e-12));
    }
    SUBCASE("all rank one") {
        RetrievalMetrics m = retrieval_metrics_from_ranks({1, 1, 1, 1});
        CHECK(m.mrr == 1.0);
        CHECK(m.r_at_1 == 1.0);
        CHECK(m.r_at_5 == 1.0);
        CHECK(m.r_at_10 == 1.0);
        CHECK(m.mean_rank == 1.0);
    }
}

TEST_CASE("ndcg") {
    SUBCASE("ideal order scores one") {
        RankingResult r;
        r.scores = {0.9, 0.5, 0.1};
        r.dense_scores = std::vector<double>{1.0, 0.5, 0.0};
        CHECK(ndcg(r) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("the worked two-relevant example") {
        RankingResult r;
        // predicted order: candidate 1 first, then candidate 0, then 2
        r.scores = {0.5, 0.9, 0.1};
        r.dense_scores = std::vector<double>{1.0, 0.5, 0.0};
        const double dcg = 0.5 / std::log2(2.0) + 1.0 / std::log2(3.0);
        const double idcg = 1.0 / std::log2(2.0) + 0.5 / std::log2(3.0);
        CHECK(dcg == doctest::Approx(1.1309).epsilon(1e-4));
        CHECK(idcg == doctest::Approx(1.3155).epsilon(1e-4));
        CHECK(ndcg(r) == doctest::Approx(dcg / idcg).epsilon(1e-12));
        CHECK(ndcg(r) == doctest::Approx(0.8597).epsilon(1e-4));
    }
    SUBCASE("a single relevant candidate ranked first scores one") {
        RankingResult r;
        r.scores = {0.9, 0.5, 0.1};
        r.dense_scores = std::vector<double>{1.0, 0.0, 0.0};
        CHECK(ndcg(r) == 1.0);
    }
    SUBCASE("no positive relevance is flagged and scores zero") {
        RankingResult r;
        r.scores = {0.9, 0.5};
        r.dense_scores = std::vector<double>{0.0, 0.0};
        bool flagged = false;
        CHECK(ndcg(r, &flagged) == 0.0);
        CHECK(flagged);
    }
    SUBCASE("missing dense scores is an error") {
        RankingResult r;
        r.scores = {0.9, 0.5};
        CHECK_THROWS(ndcg(r));
    }
}

TEST_CASE("metric oracle equivalence on random instances") {
    Rng rng(99);
    for (int rep = 0; rep < 100; ++rep) {
        const int n_rounds = rng.range(1, 8);
        std::vector<RankingResult> results;
        std::vector<std::size_t> ranks;
        for (int i = 0; i < n_rounds; ++i) {
            const int n = rng.range(2, 20);
            RankingResult r;
            for (int j = 0; j < n; ++j) r.scores.push_back(rng.range(0, 12) / 12.0);
            r.gt_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            std::vector<double> dense(static_cast<std::size_t>(n), 0.0);
            for (double& v : dense)
                if (rng.bernoulli(0.4)) v = rng.range(1, 10) / 10.0;
            r.dense_scores = dense;
            ranks.push_back(
                refmetrics::rank_of(r.scores, static_cast<std::size_t>(*r.gt_index)));
            results.push_back(std::move(r));
        }
        RetrievalMetrics mine = retrieval_metrics(results);
        refmetrics::Retrieval ref = refmetrics::retrieval(ranks);
        CHECK(std::abs(mine.mrr - ref.mrr) < 1e-9);
        CHECK(std::abs(mine.r_at_1 - ref.r1) < 1e-9);
        CHECK(std::abs(mine.r_at_5 - ref.r5) < 1e-9);
        CHECK(std::abs(mine.r_at_10 - ref.r10) < 1e-9);
        CHECK(std::abs(mine.mean_rank - ref.mr) < 1e-9);
        for (const RankingResult& r : results) {
            bool flagged = false;
            const double mine_ndcg = ndcg(r, &flagged);
            CHECK(std::abs(mine_ndcg - refmetrics::ndcg(r.scores, *r.dense_scores)) < 1e-9);
        }
    }
}

TEST_CASE("metrics are invariant under strictly monotone score transforms") {
    Rng rng(123);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = rng.range(3, 15);
        RankingResult a;
        for (int j = 0; j < n; ++j) a.scores.push_back(rng.uniform(-2, 2));
        a.gt_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        std::vector<double> dense(static_cast<std::size_t>(n), 0.0);
        dense[rng.below(dense.size())] = 1.0;
        dense[rng.below(dense.size())] = 0.5;
        a.dense_scores = dense;

        RankingResult b = a;
        for (double& s : b.scores) s = std::exp(s) * 0.5 + 3.0;

        CHECK(rank_of(a.scores, static_cast<std::size_t>(*a.gt_index)) ==
              rank_of(b.scores, static_cast<std::size_t>(*b.gt_index)));
        CHECK(ndcg(a) == doctest::Approx(ndcg(b)).epsilon(1e-12));
    }
}

TEST_CASE("metric ranges") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = rng.range(2, 12);
        RankingResult r;
        for (int j = 0; j < n; ++j) r.scores.push_back(rng.uniform(0, 1));
        r.gt_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        std::vector<double> dense(static_cast<std::size_t>(n), 0.0);
        dense[0] = rng.uniform(0.1, 1.0);
        r.dense_scores = dense;
        RetrievalMetrics m = retrieval_metrics({r});
        CHECK(m.mrr > 0.0);
        CHECK(m.mrr <= 1.0);
        CHECK(m.mean_rank >= 1.0);
        const double nd = ndcg(r);
        CHECK(nd >= 0.0);
        CHECK(nd <= 1.0);
    }
}

TEST_CASE("grouped report") {
    std::vector<RankingResult> results;
    std::vector<ResultMeta> meta;
    Rng rng(17);
    for (int i = 0; i < 12; ++i) {
        RankingResult r;
        for (int j = 0; j < 6; ++j) r.scores.push_back(rng.uniform(0, 1));
        r.gt_index = static_cast<int>(rng.below(6));
        results.push_back(std::move(r));
        meta.push_back({i % 5, i % 2 == 0});
    }

    SUBCASE("the overall row equals ungrouped metrics") {
        auto rows = grouped_report(results, meta);
        const GroupStats& all = rows.back();
        CHECK(all.group == "all");
        CHECK(all.n == results.size());
        REQUIRE(all.mrr.has_value());
        CHECK(*all.mrr == doctest::Approx(retrieval_metrics(results).mrr).epsilon(1e-12));
    }
    SUBCASE("identical models have all-zero deltas") {
        auto a = grouped_report(results, meta);
        auto b = grouped_report(results, meta);
        for (const GroupDelta& d : grouped_delta(a, b)) CHECK(d.delta == 0.0);
    }
    SUBCASE("group sizes partition the results") {
        auto rows = grouped_report(results, meta);
        std::size_t cluster_total = 0, pronoun_total = 0;
        for (const GroupStats& g : rows) {
            if (g.group.rfind("clusters=", 0) == 0) cluster_total += g.n;
            if (g.group.find("ref_pronoun") != std::string::npos) pronoun_total += g.n;
        }
        CHECK(cluster_total == results.size());
        CHECK(pronoun_total == results.size());
    }
}

TEST_CASE("metric computation does not mutate inputs and repeats bitwise") {
    Rng rng(31);
    std::vector<RankingResult> results;
    for (int i = 0; i < 5; ++i) {
        RankingResult r;
        for (int j = 0; j < 8; ++j) r.scores.push_back(rng.uniform(0, 1));
        r.gt_index = 2;
        results.push_back(std::move(r));
    }
    const std::vector<RankingResult> copy = results;
    RetrievalMetrics a = retrieval_metrics(results);
    RetrievalMetrics b = retrieval_metrics(results);
    CHECK(a.mrr == b.mrr);
    CHECK(a.mean_rank == b.mean_rank);
    for (std::size_t i = 0; i < results.size(); ++i)
        CHECK(results[i].scores == copy[i].scores);
}
