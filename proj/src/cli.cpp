#include "vdpcr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "vdpcr/common.hpp"
#include "vdpcr/headselect.hpp"
#include "vdpcr/manifest.hpp"
#include "vdpcr/pipeline.hpp"
#include "vdpcr/runconfig.hpp"
#include "vdpcr/synthetic.hpp"

namespace vdpcr {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    int threads = 1;
    bool json = false;

    ConfigFile cfg;

    void load_config() {
        if (!config_path.empty()) cfg = ConfigFile::load(config_path);
    }
    std::uint64_t resolved_seed(const std::string& section) const {
        return seed_set ? seed : cfg.get_u64(section, "seed", 0);
    }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value with [sections])");
    cmd->add_option("--seed", args.seed, "random seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--out", args.out, "output file or directory")->required();
    cmd->add_option("--threads", args.threads, "worker cap for evaluation")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--json", args.json, "also write machine-readable JSON metrics");
}

// flag > config > default
template <typename T>
T resolved(const std::optional<T>& flag, const ConfigFile& cfg, const std::string& section,
           const std::string& key, T fallback) {
    if (flag) return *flag;
    if constexpr (std::is_same_v<T, double>) return cfg.get_double(section, key, fallback);
    else if constexpr (std::is_same_v<T, int>) return cfg.get_int(section, key, fallback);
    else if constexpr (std::is_same_v<T, std::string>)
        return cfg.get_string(section, key, fallback);
    else return fallback;
}

struct TrainFlags {
    std::optional<double> lr, lambda_nsp, lambda_mtm, lambda_pcr, mask_rate, a_thres;
    std::optional<int> epochs, batch_size, n_negatives, layers, heads, model_dim, ff_dim,
        max_len, pcr_hidden;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch-size", batch_size, "items per optimizer step");
        cmd->add_option("--lambda-nsp", lambda_nsp, "answer-discrimination loss coefficient");
        cmd->add_option("--lambda-mtm", lambda_mtm, "masked-token loss coefficient");
        cmd->add_option("--lambda-pcr", lambda_pcr, "coreference loss coefficient");
        cmd->add_option("--n-negatives", n_negatives, "sampled wrong answers per round");
        cmd->add_option("--mask-rate", mask_rate, "token masking probability");
        cmd->add_option("--a-thres", a_thres, "head-selection margin threshold");
        cmd->add_option("--layers", layers, "encoder layers");
        cmd->add_option("--heads", heads, "attention heads per layer");
        cmd->add_option("--model-dim", model_dim, "encoder width");
        cmd->add_option("--ff-dim", ff_dim, "feed-forward width");
        cmd->add_option("--max-len", max_len, "maximum assembled sequence length");
        cmd->add_option("--pcr-hidden", pcr_hidden, "coreference scorer hidden width");
    }

    TrainConfig resolve(const CommonArgs& common, const std::string& section) const {
        TrainConfig tc;
        const ConfigFile& cfg = common.cfg;
        tc.lr = resolved(lr, cfg, section, "lr", 5e-3);
        tc.epochs = resolved(epochs, cfg, section, "epochs", 10);
        tc.batch_size = resolved(batch_size, cfg, section, "batch_size", 8);
        tc.weights.nsp = resolved(lambda_nsp, cfg, section, "lambda_nsp", 1.0);
        tc.weights.mtm = resolved(lambda_mtm, cfg, section, "lambda_mtm", 1.0);
        tc.weights.pcr = resolved(lambda_pcr, cfg, section, "lambda_pcr", 0.1);
        tc.n_negatives = resolved(n_negatives, cfg, section, "n_negatives", 3);
        tc.mask_rate = resolved(mask_rate, cfg, section, "mask_rate", 0.15);
        tc.a_thres = resolved(a_thres, cfg, section, "a_thres", 0.1);
        tc.encoder.n_layers = static_cast<std::size_t>(resolved(layers, cfg, section, "layers", 2));
        tc.encoder.n_heads = static_cast<std::size_t>(resolved(heads, cfg, section, "heads", 4));
        tc.encoder.model_dim =
            static_cast<std::size_t>(resolved(model_dim, cfg, section, "model_dim", 32));
        tc.encoder.ff_dim = static_cast<std::size_t>(resolved(ff_dim, cfg, section, "ff_dim", 64));
        tc.max_len = static_cast<std::size_t>(resolved(max_len, cfg, section, "max_len", 256));
        tc.encoder.max_positions = tc.max_len;
        tc.pcr_hidden =
            static_cast<std::size_t>(resolved(pcr_hidden, cfg, section, "pcr_hidden", 64));
        tc.seed = common.resolved_seed(section);
        return tc;
    }

    ordered_json snapshot(const TrainConfig& tc) const {
        ordered_json j;
        j["lr"] = tc.lr;
        j["epochs"] = tc.epochs;
        j["batch_size"] = tc.batch_size;
        j["lambda_nsp"] = tc.weights.nsp;
        j["lambda_mtm"] = tc.weights.mtm;
        j["lambda_pcr"] = tc.weights.pcr;
        j["n_negatives"] = tc.n_negatives;
        j["mask_rate"] = tc.mask_rate;
        j["a_thres"] = tc.a_thres;
        j["layers"] = tc.encoder.n_layers;
        j["heads"] = tc.encoder.n_heads;
        j["model_dim"] = tc.encoder.model_dim;
        j["ff_dim"] = tc.encoder.ff_dim;
        j["max_len"] = tc.max_len;
        j["pcr_hidden"] = tc.pcr_hidden;
        return j;
    }
};

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_retrieval_rows(std::ostream& os, const std::string& split, const std::string& group,
                          const RetrievalMetrics& m, const std::optional<double>& nd) {
    os << split << "\t" << group << "\tMRR\t" << m.mrr << "\n";
    os << split << "\t" << group << "\tR@1\t" << m.r_at_1 << "\n";
    os << split << "\t" << group << "\tR@5\t" << m.r_at_5 << "\n";
    os << split << "\t" << group << "\tR@10\t" << m.r_at_10 << "\n";
    os << split << "\t" << group << "\tMR\t" << m.mean_rank << "\n";
    if (nd) os << split << "\t" << group << "\tNDCG\t" << *nd << "\n";
}

void write_ranking_report(const fs::path& dir, const std::string& split, const RankingEval& ev,
                          bool with_json) {
    {
        std::ofstream os(dir / "metrics.tsv");
        require(os.good(), "cannot write metrics report");
        os.precision(17);
        os << "split\tgroup\tmetric\tvalue\n";
        write_retrieval_rows(os, split, "all", ev.retrieval, ev.ndcg);
    }
    {
        std::ofstream os(dir / "grouped.tsv");
        require(os.good(), "cannot write grouped report");
        os.precision(17);
        os << "split\tgroup\tmetric\tvalue\n";
        for (const GroupStats& g : grouped_report(ev.results, ev.meta)) {
            os << split << "\t" << g.group << "\tn\t" << g.n << "\n";
            if (g.mrr) os << split << "\t" << g.group << "\tMRR\t" << *g.mrr << "\n";
            if (g.ndcg) os << split << "\t" << g.group << "\tNDCG\t" << *g.ndcg << "\n";
        }
    }
    {
        std::ofstream os(dir / "scores.jsonl");
        require(os.good(), "cannot write scores");
        for (std::size_t i = 0; i < ev.results.size(); ++i) {
            ordered_json j;
            j["dialog"] = ev.keys[i].dialog_id;
            j["round"] = ev.keys[i].round;
            j["scores"] = ev.results[i].scores;
            os << j.dump() << "\n";
        }
    }
    if (with_json) {
        ordered_json j;
        j["split"] = split;
        j["mrr"] = ev.retrieval.mrr;
        j["r_at_1"] = ev.retrieval.r_at_1;
        j["r_at_5"] = ev.retrieval.r_at_5;
        j["r_at_10"] = ev.retrieval.r_at_10;
        j["mean_rank"] = ev.retrieval.mean_rank;
        j["n_rounds"] = ev.results.size();
        if (ev.ndcg) j["ndcg"] = *ev.ndcg;
        std::ofstream os(dir / "metrics.json");
        os << j.dump(2) << "\n";
    }
}

void write_pcr_report(const fs::path& dir, const std::string& split, const PcrEval& ev) {
    std::ofstream os(dir / "metrics.tsv");
    require(os.good(), "cannot write metrics report");
    os.precision(17);
    os << "split\tgroup\tmetric\tvalue\n";
    os << split << "\tall\tP\t" << ev.prf.precision << "\n";
    os << split << "\tall\tR\t" << ev.prf.recall << "\n";
    os << split << "\tall\tF1\t" << ev.prf.f1 << "\n";
    os << split << "\tall\tn_pronouns\t" << ev.n_pronouns << "\n";
}

RunManifest base_manifest(const std::string& command, const CommonArgs& common,
                          std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.seed = seed;
    if (!common.config_path.empty())
        m.inputs.emplace_back(common.config_path, sha256_file(common.config_path));
    return m;
}

// ---------------------------------------------------------------- commands

int run_gen_synthetic(const CommonArgs& common, int n, const SyntheticParams& params,
                      bool unlabeled) {
    const std::uint64_t seed = common.resolved_seed("gen");
    std::vector<Dialog> dialogs = generate_synthetic(n, seed, params);
    if (unlabeled)
        for (Dialog& d : dialogs) d = strip_coref_labels(std::move(d));
    save_corpus(dialogs, common.out);

    RunManifest m = base_manifest("gen-synthetic", common, seed);
    m.config["n"] = n;
    m.config["unlabeled"] = unlabeled;
    m.config["rounds_per_dialog"] = params.rounds_per_dialog;
    m.config["candidates_per_round"] = params.candidates_per_round;
    m.config["pronoun_rate"] = params.pronoun_rate;
    m.config["referential_rate"] = params.referential_rate;
    m.config["caption_referent_rate"] = params.caption_referent_rate;
    m.config["dense_round_fraction"] = params.dense_round_fraction;
    m.config["visual_dim"] = params.visual_dim;
    m.outputs.push_back(common.out);
    write_run_manifest(common.out + ".manifest.json", m);
    std::cout << "wrote " << dialogs.size() << " dialogs to " << common.out << "\n";
    return 0;
}

int run_train_phase0(const CommonArgs& common, const TrainFlags& flags,
                     const std::string& train_path, const std::string& val_path) {
    const TrainConfig tc0 = flags.resolve(common, "phase0");
    TrainConfig tc = tc0;
    tc.weights = {0.0, 0.0, 1.0};  // coreference loss only
    auto [train, vocab] = load_corpus(train_path);
    auto [val, vocab_unused] = load_corpus(val_path, vocab);

    Phase0Result res = train_phase0(train, val, vocab, tc);
    const fs::path dir = prepare_out_dir(common.out);
    res.model.save((dir / "model.ckpt").string());
    write_train_log((dir / "train_log.tsv").string(), res.log);
    write_pcr_report(dir, "val", {res.val_prf, 0});

    RunManifest m = base_manifest("train-phase0", common, tc.seed);
    m.config = flags.snapshot(tc0);
    m.inputs.emplace_back(train_path, sha256_file(train_path));
    m.inputs.emplace_back(val_path, sha256_file(val_path));
    m.outputs = {(dir / "model.ckpt").string(), (dir / "train_log.tsv").string(),
                 (dir / "metrics.tsv").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "phase 0 best epoch " << res.best_epoch << ", val F1 " << res.val_prf.f1 << "\n";
    return 0;
}

int run_pseudo_label(const CommonArgs& common, const TrainFlags& flags,
                     const std::string& model_path, const std::string& labeled_path,
                     const std::string& unlabeled_path, const std::string& val_path) {
    const TrainConfig tc0 = flags.resolve(common, "pseudo");
    TrainConfig tc = tc0;
    tc.weights = {0.0, 0.0, 1.0};
    Model m_s = Model::from_checkpoint(model_path);
    auto [labeled, vocab_l] = load_corpus(labeled_path);
    auto [unlabeled, vocab_u] = load_corpus(unlabeled_path, m_s.vocabulary());
    auto [val, vocab_v] = load_corpus(val_path, m_s.vocabulary());
    (void)vocab_l;
    (void)vocab_u;
    (void)vocab_v;

    BootstrapResult res =
        bootstrap_pseudo_labels(m_s, labeled, unlabeled, val, m_s.vocabulary(), tc);
    const fs::path dir = prepare_out_dir(common.out);
    save_corpus(res.merged, (dir / "merged.jsonl").string());
    res.retrained.model.save((dir / "model.ckpt").string());
    write_train_log((dir / "train_log.tsv").string(), res.retrained.log);
    write_pcr_report(dir, "val", {res.retrained.val_prf, 0});

    RunManifest m = base_manifest("pseudo-label", common, tc.seed);
    m.config = flags.snapshot(tc0);
    m.inputs.emplace_back(model_path, sha256_file(model_path));
    m.inputs.emplace_back(labeled_path, sha256_file(labeled_path));
    m.inputs.emplace_back(unlabeled_path, sha256_file(unlabeled_path));
    m.inputs.emplace_back(val_path, sha256_file(val_path));
    m.outputs = {(dir / "merged.jsonl").string(), (dir / "model.ckpt").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "pseudo-label: merged " << res.merged.size() << " dialogs, val F1 "
              << res.retrained.val_prf.f1 << "\n";
    return 0;
}

int run_analyze_heads(const CommonArgs& common, const std::string& model_path,
                      const std::string& corpus_path, std::optional<double> a_thres_flag,
                      bool dump_attention) {
    const double a_thres =
        a_thres_flag ? *a_thres_flag : common.cfg.get_double("heads", "a_thres", 0.1);
    Model model = Model::from_checkpoint(model_path);
    auto [corpus, vocab] = load_corpus(corpus_path, model.vocabulary());
    (void)vocab;

    HeadSelection sel = select_heads(model, corpus, a_thres);
    const fs::path dir = prepare_out_dir(common.out);
    write_margin_report((dir / "head_margins.tsv").string(), sel.report);
    write_selected_heads((dir / "selected_heads.tsv").string(), sel.selected);

    if (dump_attention) {
        const fs::path att_dir = dir / "attention";
        fs::create_directories(att_dir);
        for (const Dialog& d : corpus) {
            if (d.clusters.size() < 2) continue;
            AssembledInput in = model.assemble_dialog(d);
            EncoderOutput enc = model.encode(in);
            write_attention_dump((att_dir / (d.id + ".att")).string(), d.id, enc);
            write_mention_sidecar((att_dir / (d.id + ".mentions.tsv")).string(), d, in);
        }
    }

    RunManifest m = base_manifest("analyze-heads", common, 0);
    m.config["a_thres"] = a_thres;
    m.config["dump_attention"] = dump_attention;
    m.inputs.emplace_back(model_path, sha256_file(model_path));
    m.inputs.emplace_back(corpus_path, sha256_file(corpus_path));
    m.outputs = {(dir / "head_margins.tsv").string(), (dir / "selected_heads.tsv").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "selected " << sel.selected.size() << " head(s), margins over "
              << sel.report.front().n_dialogs << " dialog(s)\n";
    return 0;
}

int run_train_phase1(const CommonArgs& common, const TrainFlags& flags,
                     const std::string& train_path, const std::string& val_path,
                     const std::string& init_path, const std::string& heads_path,
                     const std::string& pcr_mode_name) {
    TrainConfig tc = flags.resolve(common, "phase1");
    const std::string mode =
        !pcr_mode_name.empty() ? pcr_mode_name
                               : common.cfg.get_string("phase1", "pcr_mode", "last");
    require(mode == "last" || mode == "selected", "bad --pcr-mode '", mode,
            "' (expected last|selected)");
    tc.pcr_mode = mode == "last" ? PcrMode::LastLayer : PcrMode::SelectedHeads;

    std::vector<HeadRef> heads;
    if (tc.pcr_mode == PcrMode::SelectedHeads) {
        require(!heads_path.empty(), "--pcr-mode selected requires --selected-heads FILE");
        heads = read_selected_heads(heads_path);
    }

    auto [train, vocab] = load_corpus(train_path);
    std::optional<Checkpoint> init;
    if (!init_path.empty()) {
        init = load_checkpoint(init_path);
        // keep token ids aligned with the checkpoint's embedding table
        vocab = Vocabulary::from_surfaces(init->meta.at("vocab").get<std::vector<std::string>>());
    }
    auto [val, vocab_v] = load_corpus(val_path, vocab);
    (void)vocab_v;

    Phase1Result res =
        train_phase1(train, val, vocab, tc, heads, init ? &*init : nullptr);
    const fs::path dir = prepare_out_dir(common.out);
    res.model.save((dir / "model.ckpt").string());
    write_train_log((dir / "train_log.tsv").string(), res.log);
    write_ranking_report(dir, "val", res.val, common.json);

    RunManifest m = base_manifest("train-phase1", common, tc.seed);
    m.config = flags.snapshot(tc);
    m.config["pcr_mode"] = mode;
    m.inputs.emplace_back(train_path, sha256_file(train_path));
    m.inputs.emplace_back(val_path, sha256_file(val_path));
    if (!init_path.empty()) m.inputs.emplace_back(init_path, sha256_file(init_path));
    if (!heads_path.empty()) m.inputs.emplace_back(heads_path, sha256_file(heads_path));
    m.outputs = {(dir / "model.ckpt").string(), (dir / "metrics.tsv").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "phase 1 best epoch " << res.best_epoch << ", val MRR " << res.val.retrieval.mrr
              << " R@1 " << res.val.retrieval.r_at_1 << "\n";
    if (res.skipped_rounds > 0)
        std::cerr << "warning: skipped " << res.skipped_rounds
                  << " round(s) without sparse annotation\n";
    return 0;
}

int run_prune(const CommonArgs& common, const std::string& corpus_path,
              const std::string& rule_name, const std::string& source_name) {
    const PruneRule rule = prune_rule_from_string(
        !rule_name.empty() ? rule_name : common.cfg.get_string("prune", "rule", "crf+cap"));
    const SourceFilter source = source_filter_from_string(
        !source_name.empty() ? source_name : common.cfg.get_string("prune", "coref_source", "any"));
    auto [corpus, vocab] = load_corpus(corpus_path);
    (void)vocab;

    std::ofstream os(common.out);
    require(os.good(), "cannot open '", common.out, "' for writing");
    for (const Dialog& d : corpus)
        for (int r = 0; r < static_cast<int>(d.rounds.size()); ++r) {
            ordered_json j;
            j["dialog"] = d.id;
            j["round"] = r;
            j["rule"] = to_string(rule);
            j["kept"] = prune(d, r, rule, source);
            os << j.dump() << "\n";
        }
    require(os.good(), "write failed for '", common.out, "'");

    RunManifest m = base_manifest("prune", common, 0);
    m.config["rule"] = to_string(rule);
    m.config["coref_source"] = to_string(source);
    m.inputs.emplace_back(corpus_path, sha256_file(corpus_path));
    m.outputs.push_back(common.out);
    write_run_manifest(common.out + ".manifest.json", m);
    return 0;
}

int run_train_phase2(const CommonArgs& common, const TrainFlags& flags,
                     const std::string& train_path, const std::string& val_path,
                     const std::string& init_path, const std::string& rule_name,
                     const std::string& source_name) {
    TrainConfig tc = flags.resolve(common, "phase2");
    tc.prune_rule = prune_rule_from_string(
        !rule_name.empty() ? rule_name : common.cfg.get_string("phase2", "rule", "crf+cap"));
    tc.relevance_source = source_filter_from_string(
        !source_name.empty() ? source_name
                             : common.cfg.get_string("phase2", "coref_source", "gold"));
    Model phase1 = Model::from_checkpoint(init_path);
    auto [train, vocab_t] = load_corpus(train_path, phase1.vocabulary());
    auto [val, vocab_v] = load_corpus(val_path, phase1.vocabulary());
    (void)vocab_t;
    (void)vocab_v;

    Phase2Result res = train_phase2(train, val, tc, phase1);
    const fs::path dir = prepare_out_dir(common.out);
    res.model.save((dir / "model.ckpt").string());
    write_train_log((dir / "train_log.tsv").string(), res.log);
    {
        std::ofstream os(dir / "metrics.tsv");
        os.precision(17);
        os << "split\tgroup\tmetric\tvalue\n";
        os << "val\tall\tNDCG\t" << res.val_ndcg << "\n";
    }

    RunManifest m = base_manifest("train-phase2", common, tc.seed);
    m.config = flags.snapshot(tc);
    m.config["rule"] = to_string(tc.prune_rule);
    m.config["coref_source"] = to_string(tc.relevance_source);
    m.inputs.emplace_back(train_path, sha256_file(train_path));
    m.inputs.emplace_back(val_path, sha256_file(val_path));
    m.inputs.emplace_back(init_path, sha256_file(init_path));
    m.outputs = {(dir / "model.ckpt").string(), (dir / "metrics.tsv").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "phase 2 best epoch " << res.best_epoch << ", val NDCG " << res.val_ndcg << "\n";
    return 0;
}

int run_evaluate(const CommonArgs& common, const std::string& model_path,
                 const std::string& corpus_path, const std::string& rule_name,
                 const std::string& source_name) {
    const PruneRule rule = prune_rule_from_string(
        !rule_name.empty() ? rule_name : common.cfg.get_string("evaluate", "rule", "all"));
    const SourceFilter source = source_filter_from_string(
        !source_name.empty() ? source_name
                             : common.cfg.get_string("evaluate", "coref_source", "pseudo"));
    Model model = Model::from_checkpoint(model_path);
    auto [corpus, vocab] = load_corpus(corpus_path, model.vocabulary());
    (void)vocab;

    RankingEval ev = evaluate_ranking(model, corpus, rule, source);
    const fs::path dir = prepare_out_dir(common.out);
    write_ranking_report(dir, "eval", ev, common.json);

    RunManifest m = base_manifest("evaluate", common, 0);
    m.config["rule"] = to_string(rule);
    m.config["coref_source"] = to_string(source);
    m.inputs.emplace_back(model_path, sha256_file(model_path));
    m.inputs.emplace_back(corpus_path, sha256_file(corpus_path));
    m.outputs = {(dir / "metrics.tsv").string(), (dir / "grouped.tsv").string(),
                 (dir / "scores.jsonl").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "evaluate: MRR " << ev.retrieval.mrr << " R@1 " << ev.retrieval.r_at_1;
    if (ev.ndcg) std::cout << " NDCG " << *ev.ndcg;
    std::cout << " over " << ev.results.size() << " round(s)\n";
    return 0;
}

int run_ensemble(const CommonArgs& common, const std::string& corpus_path,
                 const std::vector<std::string>& member_specs, const std::string& source_name) {
    const SourceFilter source = source_filter_from_string(
        !source_name.empty() ? source_name
                             : common.cfg.get_string("ensemble", "coref_source", "pseudo"));
    require(!member_specs.empty(), "ensemble needs at least one --member CKPT:RULE");
    std::vector<Model> models;
    std::vector<PruneRule> rules;
    models.reserve(member_specs.size());
    for (const std::string& spec : member_specs) {
        const std::size_t colon = spec.rfind(':');
        require(colon != std::string::npos, "--member '", spec, "' is not CKPT:RULE");
        models.push_back(Model::from_checkpoint(spec.substr(0, colon)));
        rules.push_back(prune_rule_from_string(spec.substr(colon + 1)));
    }
    auto [corpus, vocab] = load_corpus(corpus_path, models.front().vocabulary());
    (void)vocab;

    std::vector<EnsembleMember> members;
    for (std::size_t i = 0; i < models.size(); ++i) members.push_back({&models[i], rules[i]});
    RankingEval ev = ensemble_evaluate(members, corpus, source);
    const fs::path dir = prepare_out_dir(common.out);
    write_ranking_report(dir, "ensemble", ev, common.json);

    RunManifest m = base_manifest("ensemble", common, 0);
    m.config["coref_source"] = to_string(source);
    auto& specs = m.config["members"] = ordered_json::array();
    for (const std::string& spec : member_specs) specs.push_back(spec);
    m.inputs.emplace_back(corpus_path, sha256_file(corpus_path));
    for (const std::string& spec : member_specs) {
        const std::string path = spec.substr(0, spec.rfind(':'));
        m.inputs.emplace_back(path, sha256_file(path));
    }
    m.outputs = {(dir / "metrics.tsv").string()};
    write_run_manifest((dir / "manifest.json").string(), m);
    std::cout << "ensemble of " << members.size() << ": MRR " << ev.retrieval.mrr;
    if (ev.ndcg) std::cout << " NDCG " << *ev.ndcg;
    std::cout << "\n";
    return 0;
}

int run_resolve(const CommonArgs& common, const std::string& model_path,
                const std::string& corpus_path) {
    Model model = Model::from_checkpoint(model_path);
    auto [corpus, vocab] = load_corpus(corpus_path, model.vocabulary());
    (void)vocab;
    std::vector<Dialog> resolved = predict_pseudo_coref(model, std::move(corpus));
    save_corpus(resolved, common.out);

    RunManifest m = base_manifest("resolve", common, 0);
    m.inputs.emplace_back(model_path, sha256_file(model_path));
    m.inputs.emplace_back(corpus_path, sha256_file(corpus_path));
    m.outputs.push_back(common.out);
    write_run_manifest(common.out + ".manifest.json", m);
    std::cout << "resolved pronouns in " << resolved.size() << " dialog(s)\n";
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"joint pronoun-coreference and dialog answer-ranking pipeline"};
    app.require_subcommand(1);
    int exit_code = 0;

    // gen-synthetic
    auto gen_common = std::make_shared<CommonArgs>();
    auto gen_n = std::make_shared<int>(100);
    auto gen_params = std::make_shared<SyntheticParams>();
    auto gen_unlabeled = std::make_shared<bool>(false);
    {
        CLI::App* cmd = app.add_subcommand("gen-synthetic", "generate a synthetic dialog corpus");
        add_common(cmd, *gen_common);
        cmd->add_option("--n", *gen_n, "number of dialogs");
        cmd->add_option("--rounds", gen_params->rounds_per_dialog, "rounds per dialog");
        cmd->add_option("--candidates", gen_params->candidates_per_round, "answers per round");
        cmd->add_option("--pronoun-rate", gen_params->pronoun_rate, "pronoun question rate");
        cmd->add_option("--referential-rate", gen_params->referential_rate,
                        "referential fraction of pronouns");
        cmd->add_option("--caption-rate", gen_params->caption_referent_rate,
                        "referents drawn from the caption entity");
        cmd->add_option("--dense-fraction", gen_params->dense_round_fraction,
                        "dialogs with one densely annotated round");
        cmd->add_option("--visual-dim", gen_params->visual_dim, "visual feature width");
        cmd->add_flag("--unlabeled", *gen_unlabeled, "strip antecedent labels and clusters");
        cmd->callback([=, &exit_code] {
            gen_common->load_config();
            exit_code = run_gen_synthetic(*gen_common, *gen_n, *gen_params, *gen_unlabeled);
        });
    }

    // train-phase0
    auto p0_common = std::make_shared<CommonArgs>();
    auto p0_flags = std::make_shared<TrainFlags>();
    auto p0_train = std::make_shared<std::string>();
    auto p0_val = std::make_shared<std::string>();
    {
        CLI::App* cmd = app.add_subcommand("train-phase0", "train the coreference model");
        add_common(cmd, *p0_common);
        p0_flags->add_to(cmd);
        cmd->add_option("--train", *p0_train, "training corpus")->required();
        cmd->add_option("--val", *p0_val, "validation corpus")->required();
        cmd->callback([=, &exit_code] {
            p0_common->load_config();
            exit_code = run_train_phase0(*p0_common, *p0_flags, *p0_train, *p0_val);
        });
    }

    // pseudo-label
    auto pl_common = std::make_shared<CommonArgs>();
    auto pl_flags = std::make_shared<TrainFlags>();
    auto pl_model = std::make_shared<std::string>();
    auto pl_labeled = std::make_shared<std::string>();
    auto pl_unlabeled = std::make_shared<std::string>();
    auto pl_val = std::make_shared<std::string>();
    {
        CLI::App* cmd =
            app.add_subcommand("pseudo-label", "label unannotated dialogs and retrain");
        add_common(cmd, *pl_common);
        pl_flags->add_to(cmd);
        cmd->add_option("--model", *pl_model, "phase-0 checkpoint")->required();
        cmd->add_option("--labeled", *pl_labeled, "gold-labeled corpus")->required();
        cmd->add_option("--unlabeled", *pl_unlabeled, "corpus without antecedent labels")
            ->required();
        cmd->add_option("--val", *pl_val, "validation corpus")->required();
        cmd->callback([=, &exit_code] {
            pl_common->load_config();
            exit_code = run_pseudo_label(*pl_common, *pl_flags, *pl_model, *pl_labeled,
                                         *pl_unlabeled, *pl_val);
        });
    }

    // analyze-heads
    auto ah_common = std::make_shared<CommonArgs>();
    auto ah_model = std::make_shared<std::string>();
    auto ah_corpus = std::make_shared<std::string>();
    auto ah_thres = std::make_shared<std::optional<double>>();
    auto ah_dump = std::make_shared<bool>(false);
    {
        CLI::App* cmd =
            app.add_subcommand("analyze-heads", "rank attention heads by coreference margin");
        add_common(cmd, *ah_common);
        cmd->add_option("--model", *ah_model, "checkpoint to analyze")->required();
        cmd->add_option("--corpus", *ah_corpus, "analysis corpus with gold clusters")->required();
        cmd->add_option("--a-thres", *ah_thres, "selection threshold on the margin");
        cmd->add_flag("--dump-attention", *ah_dump, "write per-dialog attention dumps");
        cmd->callback([=, &exit_code] {
            ah_common->load_config();
            exit_code = run_analyze_heads(*ah_common, *ah_model, *ah_corpus, *ah_thres, *ah_dump);
        });
    }

    // train-phase1
    auto p1_common = std::make_shared<CommonArgs>();
    auto p1_flags = std::make_shared<TrainFlags>();
    auto p1_train = std::make_shared<std::string>();
    auto p1_val = std::make_shared<std::string>();
    auto p1_init = std::make_shared<std::string>();
    auto p1_heads = std::make_shared<std::string>();
    auto p1_mode = std::make_shared<std::string>();
    {
        CLI::App* cmd = app.add_subcommand("train-phase1", "joint training on sparse annotations");
        add_common(cmd, *p1_common);
        p1_flags->add_to(cmd);
        cmd->add_option("--train", *p1_train, "training corpus")->required();
        cmd->add_option("--val", *p1_val, "validation corpus")->required();
        cmd->add_option("--init", *p1_init, "checkpoint providing the initial encoder");
        cmd->add_option("--selected-heads", *p1_heads, "head list from analyze-heads");
        cmd->add_option("--pcr-mode", *p1_mode, "coreference representation: last|selected");
        cmd->callback([=, &exit_code] {
            p1_common->load_config();
            exit_code = run_train_phase1(*p1_common, *p1_flags, *p1_train, *p1_val, *p1_init,
                                         *p1_heads, *p1_mode);
        });
    }

    // prune
    auto pr_common = std::make_shared<CommonArgs>();
    auto pr_corpus = std::make_shared<std::string>();
    auto pr_rule = std::make_shared<std::string>();
    auto pr_source = std::make_shared<std::string>();
    {
        CLI::App* cmd = app.add_subcommand("prune", "emit kept rounds per rule for audit");
        add_common(cmd, *pr_common);
        cmd->add_option("--corpus", *pr_corpus, "corpus to prune")->required();
        cmd->add_option("--rule", *pr_rule, "all|crf|cap|crf+cap");
        cmd->add_option("--coref-source", *pr_source, "gold|pseudo|any");
        cmd->callback([=, &exit_code] {
            pr_common->load_config();
            exit_code = run_prune(*pr_common, *pr_corpus, *pr_rule, *pr_source);
        });
    }

    // train-phase2
    auto p2_common = std::make_shared<CommonArgs>();
    auto p2_flags = std::make_shared<TrainFlags>();
    auto p2_train = std::make_shared<std::string>();
    auto p2_val = std::make_shared<std::string>();
    auto p2_init = std::make_shared<std::string>();
    auto p2_rule = std::make_shared<std::string>();
    auto p2_source = std::make_shared<std::string>();
    {
        CLI::App* cmd = app.add_subcommand("train-phase2", "dense finetuning with history pruning");
        add_common(cmd, *p2_common);
        p2_flags->add_to(cmd);
        cmd->add_option("--train", *p2_train, "densely annotated corpus")->required();
        cmd->add_option("--val", *p2_val, "validation corpus")->required();
        cmd->add_option("--init", *p2_init, "phase-1 checkpoint")->required();
        cmd->add_option("--rule", *p2_rule, "all|crf|cap|crf+cap");
        cmd->add_option("--coref-source", *p2_source, "gold|pseudo|any");
        cmd->callback([=, &exit_code] {
            p2_common->load_config();
            exit_code = run_train_phase2(*p2_common, *p2_flags, *p2_train, *p2_val, *p2_init,
                                         *p2_rule, *p2_source);
        });
    }

    // evaluate
    auto ev_common = std::make_shared<CommonArgs>();
    auto ev_model = std::make_shared<std::string>();
    auto ev_corpus = std::make_shared<std::string>();
    auto ev_rule = std::make_shared<std::string>();
    auto ev_source = std::make_shared<std::string>();
    {
        CLI::App* cmd = app.add_subcommand("evaluate", "full metric report for a checkpoint");
        add_common(cmd, *ev_common);
        cmd->add_option("--model", *ev_model, "checkpoint")->required();
        cmd->add_option("--corpus", *ev_corpus, "evaluation corpus")->required();
        cmd->add_option("--rule", *ev_rule, "all|crf|cap|crf+cap");
        cmd->add_option("--coref-source", *ev_source, "gold|pseudo|any");
        cmd->callback([=, &exit_code] {
            ev_common->load_config();
            exit_code = run_evaluate(*ev_common, *ev_model, *ev_corpus, *ev_rule, *ev_source);
        });
    }

    // ensemble
    auto en_common = std::make_shared<CommonArgs>();
    auto en_corpus = std::make_shared<std::string>();
    auto en_members = std::make_shared<std::vector<std::string>>();
    auto en_source = std::make_shared<std::string>();
    {
        CLI::App* cmd = app.add_subcommand("ensemble", "average normalized member scores");
        add_common(cmd, *en_common);
        cmd->add_option("--corpus", *en_corpus, "evaluation corpus")->required();
        cmd->add_option("--member", *en_members, "member as CKPT:RULE (repeatable)");
        cmd->add_option("--coref-source", *en_source, "gold|pseudo|any");
        cmd->callback([=, &exit_code] {
            en_common->load_config();
            exit_code = run_ensemble(*en_common, *en_corpus, *en_members, *en_source);
        });
    }

    // resolve
    auto rs_common = std::make_shared<CommonArgs>();
    auto rs_model = std::make_shared<std::string>();
    auto rs_corpus = std::make_shared<std::string>();
    {
        CLI::App* cmd =
            app.add_subcommand("resolve", "predict pronoun antecedents for a whole corpus");
        add_common(cmd, *rs_common);
        cmd->add_option("--model", *rs_model, "coreference checkpoint")->required();
        cmd->add_option("--corpus", *rs_corpus, "corpus to annotate")->required();
        cmd->callback([=, &exit_code] {
            rs_common->load_config();
            exit_code = run_resolve(*rs_common, *rs_model, *rs_corpus);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}

}  // namespace vdpcr
