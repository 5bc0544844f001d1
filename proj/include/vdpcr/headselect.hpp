#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vdpcr/model.hpp"

namespace vdpcr {

struct HeadMargin {
    std::size_t layer = 0;
    std::size_t head = 0;
    double within = 0.0;   // mean attention between co-clustered mentions
    double across = 0.0;   // mean attention between mentions of different clusters
    double margin = 0.0;   // within - across
    std::size_t n_dialogs = 0;  // dialogs with >= 2 clusters that contributed
};

// Token-averaged attention between two mentions given their absolute
// positions in the encoded sequence.
double mention_attention(const Tensor& att, const std::vector<std::size_t>& mention_i,
                         const std::vector<std::size_t>& mention_j);

// Within/across cluster attention for one dialog and one attention map.
// Within sums ordered mention pairs inside each cluster (both directions) and
// averages over clusters; across averages the bidirectional inter-cluster
// sums over unordered cluster pairs. Dialogs with < 2 clusters return nullopt.
using ClusterPositions = std::vector<std::vector<std::vector<std::size_t>>>;
std::optional<std::pair<double, double>> cluster_stats(const Tensor& att,
                                                       const ClusterPositions& clusters);

ClusterPositions map_clusters(const Dialog& d, const AssembledInput& in);

struct HeadSelection {
    std::vector<HeadRef> selected;     // margin-descending, ties by (layer, head)
    std::vector<HeadMargin> report;    // all heads, (layer, head) order
};

// Margins averaged over all corpus dialogs with more than one cluster, using
// the full-history assembly with no candidate appended. Selects margins above
// the threshold; if none clear it, the single best head is kept.
HeadSelection select_heads(const Model& model, const std::vector<Dialog>& corpus, double a_thres);

void write_margin_report(const std::string& path, const std::vector<HeadMargin>& report);
void write_selected_heads(const std::string& path, const std::vector<HeadRef>& heads);
std::vector<HeadRef> read_selected_heads(const std::string& path);

}  // namespace vdpcr
