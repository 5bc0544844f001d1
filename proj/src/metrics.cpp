#include "vdpcr/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "vdpcr/common.hpp"

namespace vdpcr {

PRF pcr_prf(const PairSet& predicted, const PairSet& gold) {
    std::size_t tp = 0;
    for (const auto& p : predicted)
        if (gold.count(p)) ++tp;
    const std::size_t fp = predicted.size() - tp;
    const std::size_t fn = gold.size() - tp;
    PRF out;
    out.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.f1 = out.precision + out.recall == 0.0
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

std::size_t rank_of(const std::vector<double>& scores, std::size_t target) {
    require(target < scores.size(), "rank_of: target ", target, " out of ", scores.size(),
            " candidates");
    std::size_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (scores[j] > scores[target]) ++rank;
        else if (scores[j] == scores[target] && j < target) ++rank;
    }
    return rank;
}

RetrievalMetrics retrieval_metrics_from_ranks(const std::vector<std::size_t>& ranks) {
    RetrievalMetrics m;
    m.n = ranks.size();
    if (ranks.empty()) return m;
    for (std::size_t r : ranks) {
        require(r >= 1, "rank must be 1-based");
        m.mrr += 1.0 / static_cast<double>(r);
        m.r_at_1 += r <= 1 ? 1.0 : 0.0;
        m.r_at_5 += r <= 5 ? 1.0 : 0.0;
        m.r_at_10 += r <= 10 ? 1.0 : 0.0;
        m.mean_rank += static_cast<double>(r);
    }
    const double n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.r_at_1 /= n;
    m.r_at_5 /= n;
    m.r_at_10 /= n;
    m.mean_rank /= n;
    return m;
}

RetrievalMetrics retrieval_metrics(const std::vector<RankingResult>& results) {
    std::vector<std::size_t> ranks;
    for (const RankingResult& r : results) {
        if (!r.gt_index) continue;
        ranks.push_back(rank_of(r.scores, static_cast<std::size_t>(*r.gt_index)));
    }
    return retrieval_metrics_from_ranks(ranks);
}

double ndcg(const RankingResult& result, bool* flagged_empty) {
    require(result.dense_scores.has_value(), "ndcg: result carries no dense scores");
    const std::vector<double>& rel = *result.dense_scores;
    require(rel.size() == result.scores.size(), "ndcg: ", rel.size(), " relevance scores for ",
            result.scores.size(), " candidates");
    if (flagged_empty) *flagged_empty = false;
    std::size_t k = 0;
    for (double r : rel)
        if (r > 0.0) ++k;
    if (k == 0) {
        if (flagged_empty) *flagged_empty = true;
        return 0.0;
    }
    // predicted order: score descending, ties by ascending candidate index
    std::vector<std::size_t> order(rel.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return result.scores[a] > result.scores[b];
    });
    double dcg = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        dcg += rel[order[i]] / std::log2(static_cast<double>(i) + 2.0);
    std::vector<double> ideal = rel;
    std::sort(ideal.begin(), ideal.end(), std::greater<double>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

std::optional<double> mean_ndcg(const std::vector<RankingResult>& results) {
    double total = 0.0;
    std::size_t n = 0;
    for (const RankingResult& r : results) {
        if (!r.dense_scores) continue;
        total += ndcg(r);
        ++n;
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

namespace {

GroupStats stats_for(const std::string& name, const std::vector<RankingResult>& results,
                     const std::vector<bool>& in_group) {
    GroupStats g;
    g.group = name;
    std::vector<RankingResult> picked;
    for (std::size_t i = 0; i < results.size(); ++i)
        if (in_group[i]) picked.push_back(results[i]);
    g.n = picked.size();
    RetrievalMetrics rm = retrieval_metrics(picked);
    if (rm.n > 0) g.mrr = rm.mrr;
    g.ndcg = mean_ndcg(picked);
    return g;
}

}  // namespace

std::vector<GroupStats> grouped_report(const std::vector<RankingResult>& results,
                                       const std::vector<ResultMeta>& meta) {
    require(results.size() == meta.size(), "grouped_report: ", results.size(), " results vs ",
            meta.size(), " metadata entries");
    std::vector<GroupStats> out;
    const std::vector<std::pair<std::string, int>> cluster_bins = {
        {"clusters=0", 0}, {"clusters=1", 1}, {"clusters=2", 2}, {"clusters=3", 3}};
    std::vector<bool> mask(results.size());
    for (const auto& [name, count] : cluster_bins) {
        for (std::size_t i = 0; i < meta.size(); ++i) mask[i] = meta[i].cluster_count == count;
        out.push_back(stats_for(name, results, mask));
    }
    for (std::size_t i = 0; i < meta.size(); ++i) mask[i] = meta[i].cluster_count >= 4;
    out.push_back(stats_for("clusters=4+", results, mask));
    for (std::size_t i = 0; i < meta.size(); ++i) mask[i] = meta[i].question_has_ref_pronoun;
    out.push_back(stats_for("with_ref_pronoun", results, mask));
    for (std::size_t i = 0; i < meta.size(); ++i) mask[i] = !meta[i].question_has_ref_pronoun;
    out.push_back(stats_for("without_ref_pronoun", results, mask));
    mask.assign(results.size(), true);
    out.push_back(stats_for("all", results, mask));
    return out;
}

std::vector<GroupDelta> grouped_delta(const std::vector<GroupStats>& a,
                                      const std::vector<GroupStats>& b) {
    require(a.size() == b.size(), "grouped_delta: reports of different lengths");
    std::vector<GroupDelta> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i].group == b[i].group, "grouped_delta: group mismatch '", a[i].group, "' vs '",
                b[i].group, "'");
        if (a[i].mrr && b[i].mrr) out.push_back({a[i].group, "MRR", *a[i].mrr - *b[i].mrr});
        if (a[i].ndcg && b[i].ndcg) out.push_back({a[i].group, "NDCG", *a[i].ndcg - *b[i].ndcg});
    }
    return out;
}

}  // namespace vdpcr
