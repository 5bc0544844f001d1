#include "vdpcr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include "vdpcr/assemble.hpp"
#include "vdpcr/common.hpp"

namespace vdpcr {

void TrainConfig::validate() const {
    require(weights.nsp >= 0 && weights.mtm >= 0 && weights.pcr >= 0,
            "loss coefficients must be >= 0");
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(n_negatives >= 0, "n_negatives must be >= 0");
    require(lr > 0, "lr must be positive");
    require(mask_rate >= 0.0 && mask_rate <= 1.0, "mask_rate must lie in [0,1]");
}

void write_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream os(path);
    require(os.good(), "cannot open '", path, "' for writing");
    os << "epoch\tmetric\tvalue\n";
    os.precision(17);
    for (const EpochRow& row : log) os << row.epoch << "\t" << row.metric << "\t" << row.value
                                       << "\n";
    require(os.good(), "write failed for '", path, "'");
}

std::size_t resolve_visual_dim(const std::vector<Dialog>& corpus) {
    for (const Dialog& d : corpus)
        if (!d.visual_features.empty()) return d.visual_features.front().size();
    return 1;
}

namespace {

ModelConfig model_config_for(const TrainConfig& cfg, const Vocabulary& vocab,
                             const std::vector<Dialog>& corpus,
                             const std::vector<HeadRef>& selected) {
    ModelConfig mc;
    mc.encoder = cfg.encoder;
    mc.encoder.vocab_size = vocab.size();
    mc.encoder.visual_dim = resolve_visual_dim(corpus);
    mc.pcr_mode = cfg.pcr_mode;
    mc.selected_heads = selected;
    mc.pcr_head_detached = cfg.detach_pcr_head;
    mc.pcr_hidden = cfg.pcr_hidden;
    mc.mask_rate = cfg.mask_rate;
    mc.max_len = cfg.max_len;
    return mc;
}

std::size_t count_labeled_pronouns(const std::vector<Dialog>& corpus) {
    std::size_t n = 0;
    for (const Dialog& d : corpus)
        for (const CorefAnnotation& ann : d.coref)
            if (ann.labeled()) ++n;
    return n;
}

// mean per-pronoun coreference loss over a set of dialogs; n_out gets the
// pronoun count
ag::Var corpus_pcr_loss(const Model& model, const std::vector<const Dialog*>& dialogs,
                        std::size_t* n_out) {
    std::vector<PronounScores> batch;
    for (const Dialog* d : dialogs) {
        AssembledInput in = model.assemble_dialog(*d);
        EncoderOutput enc = model.encode(in);
        for (const auto& sp : model.score_pronouns(*d, in, enc)) {
            if (!sp.ann->labeled()) continue;
            batch.push_back({sp.scores, sp.ann->antecedents});
        }
    }
    if (n_out) *n_out = batch.size();
    if (batch.empty()) return ag::constant(Tensor::scalar(0.0));
    return ag::scale(pcr_loss(batch), 1.0 / static_cast<double>(batch.size()));
}

struct BestTracker {
    double best = -HUGE_VAL;
    int best_epoch = 0;
    std::vector<Tensor> snapshot;

    // strictly-better wins, so ties deterministically keep the earlier epoch
    bool offer(double value, int epoch, const ParamStore& params) {
        if (value <= best) return false;
        best = value;
        best_epoch = epoch;
        snapshot = params.snapshot_values();
        return true;
    }
};

}  // namespace

PcrEval evaluate_pcr(const Model& model, const std::vector<Dialog>& corpus) {
    PairSet predicted, gold;
    std::size_t n_pronouns = 0;
    for (std::size_t di = 0; di < corpus.size(); ++di) {
        const Dialog& d = corpus[di];
        if (d.coref.empty()) continue;
        auto preds = model.predict_antecedents(d);
        for (std::size_t ai = 0; ai < d.coref.size(); ++ai) {
            const CorefAnnotation& ann = d.coref[ai];
            if (!ann.labeled()) continue;
            ++n_pronouns;
            const std::int64_t uid = static_cast<std::int64_t>(di) * 100000 +
                                     static_cast<std::int64_t>(ai);
            for (int c : preds[ai]) predicted.insert({uid, c});
            for (int c : *ann.antecedents) gold.insert({uid, c});
        }
    }
    return {pcr_prf(predicted, gold), n_pronouns};
}

Phase0Result train_phase0(const std::vector<Dialog>& train, const std::vector<Dialog>& val,
                          const Vocabulary& vocab, const TrainConfig& cfg) {
    cfg.validate();
    require(count_labeled_pronouns(train) > 0, "phase 0: no labeled pronouns in the corpus");

    TrainConfig local = cfg;
    local.detach_pcr_head = false;
    Model model(model_config_for(local, vocab, train, {}), vocab, cfg.seed);
    Adam opt(cfg.lr);
    TrainLog log;
    BestTracker best;

    std::vector<const Dialog*> all;
    for (const Dialog& d : train) all.push_back(&d);
    double initial_loss = corpus_pcr_loss(model, all, nullptr)->value.item();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < all.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(all.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const Dialog*> batch(all.begin() + start, all.begin() + stop);
            model.params().zero_grad();
            std::size_t n = 0;
            ag::Var loss = corpus_pcr_loss(model, batch, &n);
            if (n == 0) continue;
            ag::backward(loss);
            opt.step(model.params());
            epoch_loss += loss->value.item();
            ++n_batches;
        }
        log.push_back({epoch, "train_pcr_loss", n_batches ? epoch_loss / n_batches : 0.0});
        PcrEval ev = evaluate_pcr(model, val);
        log.push_back({epoch, "val_pcr_p", ev.prf.precision});
        log.push_back({epoch, "val_pcr_r", ev.prf.recall});
        log.push_back({epoch, "val_pcr_f1", ev.prf.f1});
        best.offer(ev.prf.f1, epoch, model.params());
    }
    if (!best.snapshot.empty()) model.params().restore_values(best.snapshot);

    const PRF final_prf = evaluate_pcr(model, val).prf;
    return Phase0Result{std::move(model), final_prf, best.best_epoch, initial_loss,
                        std::move(log)};
}

std::vector<Dialog> predict_pseudo_coref(const Model& model, std::vector<Dialog> corpus) {
    for (Dialog& d : corpus) {
        if (d.coref.empty()) {
            d.clusters.clear();
            continue;
        }
        auto preds = model.predict_antecedents(d);
        // union-find over spans linked by predicted pronoun-antecedent pairs
        std::map<Span, Mention> mentions;
        std::map<Span, Span> parent;
        auto find = [&](Span s) {
            while (!(parent.at(s) == s)) s = parent.at(s);
            return s;
        };
        auto ensure = [&](const Mention& m) {
            mentions.emplace(m.span, m);
            parent.emplace(m.span, m.span);
        };
        for (std::size_t ai = 0; ai < d.coref.size(); ++ai) {
            CorefAnnotation& ann = d.coref[ai];
            ann.antecedents = preds[ai];
            ann.source = CorefSource::Pseudo;
            ensure(ann.pronoun);
            for (const Mention& c : ann.candidates) ensure(c);
            for (int idx : preds[ai]) {
                const Span a = find(ann.pronoun.span);
                const Span b = find(ann.candidates[static_cast<std::size_t>(idx)].span);
                if (!(a == b)) parent[a] = b;
            }
        }
        std::map<Span, std::vector<Mention>> components;
        for (const auto& [span, mention] : mentions) components[find(span)].push_back(mention);
        d.clusters.clear();
        for (auto& [root, members] : components) {
            if (members.size() < 2) continue;
            d.clusters.push_back({std::move(members)});
        }
        validate_dialog(d);
    }
    return corpus;
}

BootstrapResult bootstrap_pseudo_labels(const Model& m_s, const std::vector<Dialog>& labeled,
                                        const std::vector<Dialog>& unlabeled,
                                        const std::vector<Dialog>& val, const Vocabulary& vocab,
                                        const TrainConfig& cfg) {
    std::unordered_set<std::string> labeled_ids;
    for (const Dialog& d : labeled) labeled_ids.insert(d.id);
    for (const Dialog& d : unlabeled)
        require(!labeled_ids.count(d.id), "dialog '", d.id,
                "' appears in both the labeled and unlabeled corpora");
    for (const Dialog& d : unlabeled)
        for (const CorefAnnotation& ann : d.coref)
            require(!ann.labeled(), "dialog '", d.id, "': unlabeled corpus carries labels");

    std::vector<Dialog> merged = labeled;  // gold annotations pass through untouched
    std::vector<Dialog> pseudo = predict_pseudo_coref(m_s, unlabeled);
    merged.insert(merged.end(), std::make_move_iterator(pseudo.begin()),
                  std::make_move_iterator(pseudo.end()));
    Phase0Result retrained = train_phase0(merged, val, vocab, cfg);
    return BootstrapResult{std::move(merged), std::move(retrained)};
}

namespace {

ResultMeta meta_for(const Dialog& d, int round, SourceFilter source) {
    ResultMeta meta;
    meta.cluster_count = static_cast<int>(d.clusters.size());
    meta.question_has_ref_pronoun = false;
    for (const CorefAnnotation& ann : d.coref) {
        if (ann.pronoun.span.round != round) continue;
        const auto& q = d.rounds[static_cast<std::size_t>(round)].question;
        if (ann.pronoun.span.end >= static_cast<int>(q.size())) continue;
        if (source != SourceFilter::Any &&
            (source == SourceFilter::Gold) != (ann.source == CorefSource::Gold))
            continue;
        if (ann.referential()) meta.question_has_ref_pronoun = true;
    }
    return meta;
}

}  // namespace

RankingEval evaluate_ranking(const Model& model, const std::vector<Dialog>& corpus,
                             PruneRule rule, SourceFilter source) {
    RankingEval ev;
    for (const Dialog& d : corpus) {
        for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) {
            const Round& round = d.rounds[static_cast<std::size_t>(r)];
            if (!round.gt_index && !round.dense_scores) continue;
            const std::set<int> kept = prune(d, r, rule, source);
            RankingResult result;
            for (int j = 0; j < static_cast<int>(round.answers.size()); ++j)
                result.scores.push_back(model.candidate_prob(d, r, j, kept));
            result.gt_index = round.gt_index;
            result.dense_scores = round.dense_scores;
            ev.results.push_back(std::move(result));
            ev.meta.push_back(meta_for(d, r, source));
            ev.keys.push_back({d.id, r});
        }
    }
    ev.retrieval = retrieval_metrics(ev.results);
    ev.ndcg = mean_ndcg(ev.results);
    return ev;
}

Phase1Result train_phase1(const std::vector<Dialog>& train, const std::vector<Dialog>& val,
                          const Vocabulary& vocab, const TrainConfig& cfg,
                          const std::vector<HeadRef>& selected_heads, const Checkpoint* init) {
    cfg.validate();
    Model model(model_config_for(cfg, vocab, train, selected_heads), vocab, cfg.seed);
    if (init) {
        // transfer the encoder; task heads start fresh
        Checkpoint enc_only;
        for (const auto& [name, t] : init->params)
            if (name.rfind("encoder.", 0) == 0) enc_only.params.emplace_back(name, t);
        load_into(model.params(), enc_only);
    }

    Adam opt(cfg.lr);
    Rng rng(mix_seed(cfg.seed, 0x70686173u));
    TrainLog log;
    BestTracker best;
    std::size_t skipped = 0;

    struct RoundRef {
        const Dialog* dialog;
        int round;
    };
    std::vector<RoundRef> rounds;
    for (const Dialog& d : train)
        for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) {
            if (d.rounds[static_cast<std::size_t>(r)].gt_index) rounds.push_back({&d, r});
            else ++skipped;
        }
    require(!rounds.empty(), "phase 1: no rounds with sparse annotations");

    const bool use_pcr = cfg.weights.pcr != 0.0 && !cfg.detach_pcr_head;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < rounds.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(rounds.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::pair<NspOutput, int>> nsp_batch;
            std::vector<ag::Var> mtm_losses;
            std::size_t n_masked = 0;
            std::vector<PronounScores> pcr_batch;

            for (std::size_t i = start; i < stop; ++i) {
                const Dialog& d = *rounds[i].dialog;
                const int r = rounds[i].round;
                const Round& round = d.rounds[static_cast<std::size_t>(r)];
                const int gt = *round.gt_index;
                const std::set<int> kept = all_history(d, r);

                std::vector<int> negatives;
                for (int j = 0; j < static_cast<int>(round.answers.size()); ++j)
                    if (j != gt) negatives.push_back(j);
                rng.shuffle(negatives);
                negatives.resize(std::min<std::size_t>(
                    negatives.size(), static_cast<std::size_t>(cfg.n_negatives)));

                std::vector<std::pair<int, int>> sequences{{gt, 1}};
                for (int j : negatives) sequences.emplace_back(j, 0);

                for (const auto& [cand, label] : sequences) {
                    auto [masked_in, masked] =
                        model.apply_mtm_mask(model.assemble_round(d, r, cand, kept), rng);
                    EncoderOutput enc = model.encode(masked_in);
                    nsp_batch.emplace_back(model.nsp(enc), label);
                    if (!masked.empty()) {
                        mtm_losses.push_back(model.mtm(enc, masked));
                        n_masked += masked.size();
                    }
                    if (label == 1 && use_pcr) {
                        for (const auto& sp : model.score_pronouns(d, masked_in, enc))
                            if (sp.ann->labeled())
                                pcr_batch.push_back({sp.scores, sp.ann->antecedents});
                    }
                }
            }

            model.params().zero_grad();
            std::optional<ag::Var> nsp_term, mtm_term, pcr_term;
            if (!nsp_batch.empty())
                nsp_term = ag::scale(nsp_loss(nsp_batch),
                                     1.0 / static_cast<double>(nsp_batch.size()));
            if (!mtm_losses.empty())
                mtm_term = ag::scale(ag::sum(ag::stack_scalars(mtm_losses)),
                                     1.0 / static_cast<double>(n_masked));
            if (use_pcr && !pcr_batch.empty())
                pcr_term = ag::scale(pcr_loss(pcr_batch),
                                     1.0 / static_cast<double>(pcr_batch.size()));
            ag::Var loss = joint_loss(nsp_term, mtm_term, pcr_term, cfg.weights);
            if (!loss->requires_grad) continue;
            ag::backward(loss);
            opt.step(model.params());
            epoch_loss += loss->value.item();
            ++n_batches;
        }
        log.push_back({epoch, "train_joint_loss", n_batches ? epoch_loss / n_batches : 0.0});
        RankingEval ev = evaluate_ranking(model, val, PruneRule::All, cfg.relevance_source);
        log.push_back({epoch, "val_mrr", ev.retrieval.mrr});
        log.push_back({epoch, "val_r_at_1", ev.retrieval.r_at_1});
        log.push_back({epoch, "val_r_at_5", ev.retrieval.r_at_5});
        log.push_back({epoch, "val_r_at_10", ev.retrieval.r_at_10});
        log.push_back({epoch, "val_mean_rank", ev.retrieval.mean_rank});
        best.offer(ev.retrieval.mrr, epoch, model.params());
    }
    if (!best.snapshot.empty()) model.params().restore_values(best.snapshot);

    Phase1Result out{std::move(model), {}, best.best_epoch, skipped, std::move(log)};
    out.val = evaluate_ranking(out.model, val, PruneRule::All, cfg.relevance_source);
    return out;
}

std::vector<double> corrected_targets(const Round& round) {
    require(round.dense_scores.has_value(), "corrected_targets: round has no dense scores");
    std::vector<double> targets = *round.dense_scores;
    if (round.gt_index) targets[static_cast<std::size_t>(*round.gt_index)] = 1.0;
    return targets;
}

Phase2Result train_phase2(const std::vector<Dialog>& train, const std::vector<Dialog>& val,
                          const TrainConfig& cfg, const Model& phase1_model) {
    cfg.validate();
    // continue from the phase-1 parameters on an identically shaped model
    Model model(phase1_model.config(), phase1_model.vocabulary(), cfg.seed);
    {
        std::vector<Tensor> values;
        for (const auto& [name, v] : phase1_model.params().items()) values.push_back(v->value);
        model.params().restore_values(values);
    }

    struct DenseRound {
        const Dialog* dialog;
        int round;
        std::vector<double> targets;  // relevance-corrected
    };
    std::vector<DenseRound> rounds;
    for (const Dialog& d : train)
        for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) {
            const Round& round = d.rounds[static_cast<std::size_t>(r)];
            if (!round.dense_scores) continue;
            rounds.push_back({&d, r, corrected_targets(round)});
        }
    require(!rounds.empty(), "phase 2: no rounds with dense annotations");

    Adam opt(cfg.lr);
    TrainLog log;
    BestTracker best;

    auto val_ndcg = [&]() {
        RankingEval ev = evaluate_ranking(model, val, cfg.prune_rule, cfg.relevance_source);
        return ev.ndcg.value_or(0.0);
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < rounds.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(rounds.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<ag::Var> round_losses;
            for (std::size_t i = start; i < stop; ++i) {
                const Dialog& d = *rounds[i].dialog;
                const int r = rounds[i].round;
                const Round& round = d.rounds[static_cast<std::size_t>(r)];
                const std::set<int> kept = prune(d, r, cfg.prune_rule, cfg.relevance_source);
                std::vector<ag::Var> probs;
                for (int j = 0; j < static_cast<int>(round.answers.size()); ++j) {
                    EncoderOutput enc = model.encode(model.assemble_round(d, r, j, kept));
                    probs.push_back(model.nsp(enc).p);
                }
                round_losses.push_back(phase2_loss(probs, rounds[i].targets));
            }
            model.params().zero_grad();
            ag::Var loss = ag::scale(ag::sum(ag::stack_scalars(round_losses)),
                                     1.0 / static_cast<double>(round_losses.size()));
            ag::backward(loss);
            opt.step(model.params());
            epoch_loss += loss->value.item();
            ++n_batches;
        }
        log.push_back({epoch, "train_phase2_loss", n_batches ? epoch_loss / n_batches : 0.0});
        const double nd = val_ndcg();
        log.push_back({epoch, "val_ndcg", nd});
        best.offer(nd, epoch, model.params());
    }
    if (!best.snapshot.empty()) model.params().restore_values(best.snapshot);

    Phase2Result out{std::move(model), 0.0, best.best_epoch, std::move(log)};
    out.val_ndcg = [&] {
        RankingEval ev = evaluate_ranking(out.model, val, cfg.prune_rule, cfg.relevance_source);
        return ev.ndcg.value_or(0.0);
    }();
    return out;
}

RankingEval ensemble_evaluate(const std::vector<EnsembleMember>& members,
                              const std::vector<Dialog>& corpus, SourceFilter source) {
    require(!members.empty(), "ensemble: no members");
    for (const EnsembleMember& m : members) require(m.model != nullptr, "ensemble: null member");

    RankingEval ev;
    for (const Dialog& d : corpus) {
        for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) {
            const Round& round = d.rounds[static_cast<std::size_t>(r)];
            if (!round.gt_index && !round.dense_scores) continue;
            std::vector<double> averaged;
            for (std::size_t mi = 0; mi < members.size(); ++mi) {
                const std::set<int> kept = prune(d, r, members[mi].rule, source);
                std::vector<double> scores;
                for (int j = 0; j < static_cast<int>(round.answers.size()); ++j)
                    scores.push_back(members[mi].model->candidate_prob(d, r, j, kept));
                if (mi == 0) averaged.assign(scores.size(), 0.0);
                require(scores.size() == averaged.size(), "ensemble: dialog '", d.id, "' round ",
                        r, ": member ", mi, " scored ", scores.size(), " candidates, expected ",
                        averaged.size());
                // softmax normalization per member
                double mx = *std::max_element(scores.begin(), scores.end());
                double z = 0.0;
                for (double s : scores) z += std::exp(s - mx);
                for (std::size_t j = 0; j < scores.size(); ++j)
                    averaged[j] += std::exp(scores[j] - mx) / z / static_cast<double>(members.size());
            }
            RankingResult result;
            result.scores = std::move(averaged);
            result.gt_index = round.gt_index;
            result.dense_scores = round.dense_scores;
            ev.results.push_back(std::move(result));
            ev.meta.push_back(meta_for(d, r, source));
            ev.keys.push_back({d.id, r});
        }
    }
    ev.retrieval = retrieval_metrics(ev.results);
    ev.ndcg = mean_ndcg(ev.results);
    return ev;
}

}  // namespace vdpcr
