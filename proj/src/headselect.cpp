#include "vdpcr/headselect.hpp"

#include <algorithm>
#include <fstream>

#include "vdpcr/common.hpp"

namespace vdpcr {

double mention_attention(const Tensor& att, const std::vector<std::size_t>& mention_i,
                         const std::vector<std::size_t>& mention_j) {
    require(!mention_i.empty() && !mention_j.empty(), "mention_attention: empty mention span");
    const std::size_t T = att.rows();
    double total = 0.0;
    for (std::size_t a : mention_i)
        for (std::size_t b : mention_j) {
            require(a < T && b < T, "mention_attention: position out of ", att.shape_str());
            total += att.at(a, b);
        }
    return total / (static_cast<double>(mention_i.size()) * static_cast<double>(mention_j.size()));
}

std::optional<std::pair<double, double>> cluster_stats(const Tensor& att,
                                                       const ClusterPositions& clusters) {
    const std::size_t nc = clusters.size();
    if (nc < 2) return std::nullopt;
    double within = 0.0;
    for (const auto& cluster : clusters)
        for (std::size_t i = 0; i < cluster.size(); ++i)
            for (std::size_t j = 0; j < cluster.size(); ++j)
                if (i != j) within += mention_attention(att, cluster[i], cluster[j]);
    within /= static_cast<double>(nc);

    double across = 0.0;
    for (std::size_t l = 0; l < nc; ++l)
        for (std::size_t m = l + 1; m < nc; ++m)
            for (const auto& mi : clusters[l])
                for (const auto& mj : clusters[m])
                    across += mention_attention(att, mi, mj) + mention_attention(att, mj, mi);
    across *= 2.0 / (static_cast<double>(nc) * static_cast<double>(nc - 1));
    return std::make_pair(within, across);
}

ClusterPositions map_clusters(const Dialog& d, const AssembledInput& in) {
    ClusterPositions out;
    for (const CoreferenceCluster& c : d.clusters) {
        std::vector<std::vector<std::size_t>> cluster;
        for (const Mention& m : c.mentions) cluster.push_back(in.positions_of(m.span));
        out.push_back(std::move(cluster));
    }
    return out;
}

HeadSelection select_heads(const Model& model, const std::vector<Dialog>& corpus, double a_thres) {
    const EncoderConfig& cfg = model.encoder().config();
    const std::size_t L = cfg.n_layers, K = cfg.n_heads;
    std::vector<double> within_sum(L * K, 0.0), across_sum(L * K, 0.0);
    std::size_t n_dialogs = 0;

    for (const Dialog& d : corpus) {
        if (d.clusters.size() < 2) continue;
        AssembledInput in = model.assemble_dialog(d);
        ClusterPositions clusters = map_clusters(d, in);
        EncoderOutput enc = model.encode(in);
        bool counted = false;
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t k = 0; k < K; ++k) {
                auto stats = cluster_stats(enc.attention[l][k]->value, clusters);
                if (!stats) continue;
                within_sum[l * K + k] += stats->first;
                across_sum[l * K + k] += stats->second;
                counted = true;
            }
        if (counted) ++n_dialogs;
    }
    require(n_dialogs > 0, "head selection: no dialog with more than one coreference cluster");

    HeadSelection sel;
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k) {
            HeadMargin hm;
            hm.layer = l;
            hm.head = k;
            hm.within = within_sum[l * K + k] / static_cast<double>(n_dialogs);
            hm.across = across_sum[l * K + k] / static_cast<double>(n_dialogs);
            hm.margin = hm.within - hm.across;
            hm.n_dialogs = n_dialogs;
            sel.report.push_back(hm);
        }

    std::vector<const HeadMargin*> ranked;
    for (const HeadMargin& hm : sel.report) ranked.push_back(&hm);
    std::stable_sort(ranked.begin(), ranked.end(), [](const HeadMargin* a, const HeadMargin* b) {
        if (a->margin != b->margin) return a->margin > b->margin;
        return std::tie(a->layer, a->head) < std::tie(b->layer, b->head);
    });
    for (const HeadMargin* hm : ranked)
        if (hm->margin > a_thres) sel.selected.push_back({hm->layer, hm->head});
    if (sel.selected.empty()) sel.selected.push_back({ranked[0]->layer, ranked[0]->head});
    return sel;
}

void write_margin_report(const std::string& path, const std::vector<HeadMargin>& report) {
    std::ofstream os(path);
    require(os.good(), "cannot open '", path, "' for writing");
    os << "layer\thead\ta_w\ta_a\tmargin\tn_dialogs\n";
    os.precision(17);
    for (const HeadMargin& hm : report)
        os << hm.layer << "\t" << hm.head << "\t" << hm.within << "\t" << hm.across << "\t"
           << hm.margin << "\t" << hm.n_dialogs << "\n";
    require(os.good(), "write failed for '", path, "'");
}

void write_selected_heads(const std::string& path, const std::vector<HeadRef>& heads) {
    std::ofstream os(path);
    require(os.good(), "cannot open '", path, "' for writing");
    os << "layer\thead\n";
    for (const HeadRef& h : heads) os << h.layer << "\t" << h.head << "\n";
    require(os.good(), "write failed for '", path, "'");
}

std::vector<HeadRef> read_selected_heads(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open '", path, "'");
    std::string header;
    std::getline(is, header);
    require(header == "layer\thead", "'", path, "': unexpected header '", header, "'");
    std::vector<HeadRef> heads;
    std::size_t l, k;
    while (is >> l >> k) heads.push_back({l, k});
    return heads;
}

}  // namespace vdpcr
