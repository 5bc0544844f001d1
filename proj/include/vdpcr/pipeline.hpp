#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vdpcr/metrics.hpp"
#include "vdpcr/model.hpp"
#include "vdpcr/pruning.hpp"

namespace vdpcr {

struct TrainConfig {
    LossWeights weights;                  // joint-loss coefficients
    double lr = 5e-3;
    int epochs = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
    int n_negatives = 3;                  // sampled wrong answers per round in phase 1
    double a_thres = 0.1;
    PcrMode pcr_mode = PcrMode::LastLayer;
    PruneRule prune_rule = PruneRule::All;
    SourceFilter relevance_source = SourceFilter::Gold;
    double mask_rate = 0.15;
    std::size_t max_len = 256;
    std::size_t pcr_hidden = 64;
    bool detach_pcr_head = false;
    EncoderConfig encoder;                // vocab_size/visual_dim resolved at train time

    void validate() const;
};

struct EpochRow {
    int epoch = 0;
    std::string metric;
    double value = 0.0;
};
using TrainLog = std::vector<EpochRow>;
void write_train_log(const std::string& path, const TrainLog& log);

// ---- evaluation -----------------------------------------------------------

struct PcrEval {
    PRF prf;
    std::size_t n_pronouns = 0;
};

PcrEval evaluate_pcr(const Model& model, const std::vector<Dialog>& corpus);

struct RoundKey {
    std::string dialog_id;
    int round = 0;
};

struct RankingEval {
    RetrievalMetrics retrieval;
    std::optional<double> ndcg;
    std::vector<RankingResult> results;
    std::vector<ResultMeta> meta;
    std::vector<RoundKey> keys;
};

// Scores every candidate of every annotated round, assembling history under
// the given rule. NSP score p is computed per candidate sequence in
// isolation.
RankingEval evaluate_ranking(const Model& model, const std::vector<Dialog>& corpus,
                             PruneRule rule, SourceFilter source);

// ---- phases ----------------------------------------------------------------

struct Phase0Result {
    Model model;
    PRF val_prf;
    int best_epoch = 0;
    double initial_loss = 0.0;
    TrainLog log;
};

// PCR-only training on the full-dialog assembly; best validation F1 wins.
Phase0Result train_phase0(const std::vector<Dialog>& train, const std::vector<Dialog>& val,
                          const Vocabulary& vocab, const TrainConfig& cfg);

// Predicted coreference for every dialog: antecedents from the model, source
// Pseudo, clusters rebuilt from the predicted links.
std::vector<Dialog> predict_pseudo_coref(const Model& model, std::vector<Dialog> corpus);

struct BootstrapResult {
    std::vector<Dialog> merged;
    Phase0Result retrained;  // the larger model trained on gold + pseudo labels
};

BootstrapResult bootstrap_pseudo_labels(const Model& m_s, const std::vector<Dialog>& labeled,
                                        const std::vector<Dialog>& unlabeled,
                                        const std::vector<Dialog>& val, const Vocabulary& vocab,
                                        const TrainConfig& cfg);

struct Phase1Result {
    Model model;
    RankingEval val;
    int best_epoch = 0;
    std::size_t skipped_rounds = 0;
    TrainLog log;
};

// Joint NSP+MTM+PCR training on full-history inputs; per round one positive
// and n_negatives sampled negative sequences; best validation MRR wins.
Phase1Result train_phase1(const std::vector<Dialog>& train, const std::vector<Dialog>& val,
                          const Vocabulary& vocab, const TrainConfig& cfg,
                          const std::vector<HeadRef>& selected_heads,
                          const Checkpoint* init = nullptr);

struct Phase2Result {
    Model model;
    double val_ndcg = 0.0;
    int best_epoch = 0;
    TrainLog log;
};

// Dense scores with the sparse ground truth forced to full relevance.
std::vector<double> corrected_targets(const Round& round);

// Dense finetuning from a phase-1 checkpoint: relevance-corrected targets,
// inputs pruned under the configured rule, cross-entropy loss only.
Phase2Result train_phase2(const std::vector<Dialog>& train, const std::vector<Dialog>& val,
                          const TrainConfig& cfg, const Model& phase1_model);

// ---- ensembling -------------------------------------------------------------

struct EnsembleMember {
    const Model* model = nullptr;
    PruneRule rule = PruneRule::All;
};

// Per round: each member's candidate scores are softmax-normalized, then
// averaged arithmetically across members.
RankingEval ensemble_evaluate(const std::vector<EnsembleMember>& members,
                              const std::vector<Dialog>& corpus, SourceFilter source);

std::size_t resolve_visual_dim(const std::vector<Dialog>& corpus);

}  // namespace vdpcr
