#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace vdpcr {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// (pronoun id, candidate id) pair classification; empty denominators give 0
using PairSet = std::set<std::pair<std::int64_t, std::int64_t>>;
PRF pcr_prf(const PairSet& predicted, const PairSet& gold);

// 1-based; score-descending order with ties broken by ascending index
std::size_t rank_of(const std::vector<double>& scores, std::size_t target);

struct RankingResult {
    std::vector<double> scores;
    std::optional<int> gt_index;
    std::optional<std::vector<double>> dense_scores;
};

struct RetrievalMetrics {
    double mrr = 0.0;
    double r_at_1 = 0.0;
    double r_at_5 = 0.0;
    double r_at_10 = 0.0;
    double mean_rank = 0.0;
    std::size_t n = 0;
};

RetrievalMetrics retrieval_metrics_from_ranks(const std::vector<std::size_t>& ranks);
RetrievalMetrics retrieval_metrics(const std::vector<RankingResult>& results);

// Truncated at k = number of positively relevant candidates; a round with no
// positive relevance scores 0 and sets *flagged_empty.
double ndcg(const RankingResult& result, bool* flagged_empty = nullptr);
std::optional<double> mean_ndcg(const std::vector<RankingResult>& results);

struct ResultMeta {
    int cluster_count = 0;
    bool question_has_ref_pronoun = false;
};

struct GroupStats {
    std::string group;
    std::size_t n = 0;
    std::optional<double> mrr;
    std::optional<double> ndcg;
};

// Cluster-count bins 0/1/2/3/4+, pronoun presence, and the overall row.
std::vector<GroupStats> grouped_report(const std::vector<RankingResult>& results,
                                       const std::vector<ResultMeta>& meta);

struct GroupDelta {
    std::string group;
    std::string metric;
    double delta = 0.0;
};

std::vector<GroupDelta> grouped_delta(const std::vector<GroupStats>& a,
                                      const std::vector<GroupStats>& b);

}  // namespace vdpcr
