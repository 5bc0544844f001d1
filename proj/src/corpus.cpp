#include "vdpcr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

#include "vdpcr/common.hpp"

namespace vdpcr {

using nlohmann::ordered_json;

const std::vector<std::string>& pronoun_inventory() {
    // third-person personal and possessive pronouns
    static const std::vector<std::string> inv = {"it",  "he",  "she", "they", "him", "her",
                                                 "them", "its", "his", "their"};
    return inv;
}

bool is_pronoun_surface(const std::string& surface) {
    const auto& inv = pronoun_inventory();
    return std::find(inv.begin(), inv.end(), surface) != inv.end();
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (const char* s : {"[IMG]", "[CLS]", "[SEP]", "[MASK]", "[PAD]", "[UNK]"}) {
        surface_to_id_[s] = static_cast<int>(id_to_surface_.size());
        id_to_surface_.emplace_back(s);
    }
}

int Vocabulary::add(const std::string& surface) {
    auto it = surface_to_id_.find(surface);
    if (it != surface_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_surface_.size());
    surface_to_id_[surface] = id;
    id_to_surface_.push_back(surface);
    return id;
}

int Vocabulary::id(const std::string& surface) const {
    auto it = surface_to_id_.find(surface);
    return it == surface_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& surface) const {
    return surface_to_id_.count(surface) > 0;
}

const std::string& Vocabulary::surface(int id) const {
    require(id >= 0 && id < static_cast<int>(id_to_surface_.size()), "token id ", id,
            " out of vocabulary of size ", id_to_surface_.size());
    return id_to_surface_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

Vocabulary Vocabulary::from_surfaces(const std::vector<std::string>& all) {
    Vocabulary v;
    require(all.size() >= kFirstRegularId, "vocabulary list too short: ", all.size());
    for (std::size_t i = 0; i < static_cast<std::size_t>(kFirstRegularId); ++i)
        require(all[i] == v.id_to_surface_[i], "vocabulary list: special slot ", i, " holds '",
                all[i], "'");
    for (std::size_t i = kFirstRegularId; i < all.size(); ++i) v.add(all[i]);
    return v;
}

std::vector<std::string> Dialog::utterance_tokens(int round) const {
    if (round == -1) return caption;
    require(round >= 0 && round < static_cast<int>(rounds.size()), "dialog '", id, "': round ",
            round, " out of range");
    const Round& r = rounds[static_cast<std::size_t>(round)];
    std::vector<std::string> out = r.question;
    if (r.gt_index) {
        const auto& ans = r.answers.at(static_cast<std::size_t>(*r.gt_index));
        out.insert(out.end(), ans.begin(), ans.end());
    }
    return out;
}

std::size_t Dialog::utterance_len(int round) const { return utterance_tokens(round).size(); }

std::vector<std::string> Dialog::span_tokens(const Span& s) const {
    const auto utt = utterance_tokens(s.round);
    require(s.start >= 0 && s.start <= s.end && s.end < static_cast<int>(utt.size()), "dialog '",
            id, "': span (", s.round, ",", s.start, ",", s.end, ") out of utterance of length ",
            utt.size());
    return {utt.begin() + s.start, utt.begin() + s.end + 1};
}

namespace {

// (round, position) order; a candidate must end before the pronoun starts
bool strictly_precedes(const Span& a, const Span& b) {
    if (a.round != b.round) return a.round < b.round;
    return a.end < b.start;
}

void check_span(const Dialog& d, const Span& s, const char* what) {
    require(s.round >= -1 && s.round < static_cast<int>(d.rounds.size()), "dialog '", d.id, "': ",
            what, " round ", s.round, " out of range");
    require(s.start >= 0 && s.start <= s.end, "dialog '", d.id, "': ", what, " span (", s.start,
            ",", s.end, ") is malformed");
    const std::size_t len = d.utterance_len(s.round);
    require(s.end < static_cast<int>(len), "dialog '", d.id, "': ", what, " span (", s.round, ",",
            s.start, ",", s.end, ") exceeds utterance of length ", len);
}

bool mention_in_cluster(const CoreferenceCluster& c, const Span& s) {
    for (const Mention& m : c.mentions)
        if (m.span == s) return true;
    return false;
}

}  // namespace

void validate_dialog(const Dialog& d) {
    if (!d.visual_features.empty()) {
        const std::size_t dv = d.visual_features.front().size();
        for (const auto& f : d.visual_features)
            require(f.size() == dv, "dialog '", d.id, "': visual feature dims differ");
    }
    for (std::size_t r = 0; r < d.rounds.size(); ++r) {
        const Round& round = d.rounds[r];
        if (round.gt_index)
            require(*round.gt_index >= 0 &&
                        *round.gt_index < static_cast<int>(round.answers.size()),
                    "dialog '", d.id, "': round ", r, " gt_index ", *round.gt_index, " out of ",
                    round.answers.size(), " candidates");
        if (round.dense_scores) {
            require(round.dense_scores->size() == round.answers.size(), "dialog '", d.id,
                    "': round ", r, " has ", round.dense_scores->size(), " dense scores for ",
                    round.answers.size(), " candidates");
            for (double s : *round.dense_scores)
                require(s >= 0.0 && s <= 1.0, "dialog '", d.id, "': round ", r,
                        " dense score ", s, " outside [0,1]");
        }
    }
    for (const CorefAnnotation& ann : d.coref) {
        check_span(d, ann.pronoun.span, "pronoun");
        require(ann.pronoun.span.start == ann.pronoun.span.end, "dialog '", d.id,
                "': pronoun mention spans multiple tokens");
        const auto tok = d.span_tokens(ann.pronoun.span);
        require(is_pronoun_surface(tok.front()), "dialog '", d.id, "': token '", tok.front(),
                "' is not in the pronoun inventory");
        for (const Mention& c : ann.candidates) {
            check_span(d, c.span, "candidate");
            require(strictly_precedes(c.span, ann.pronoun.span), "dialog '", d.id,
                    "': candidate at (", c.span.round, ",", c.span.start,
                    ") does not precede its pronoun at (", ann.pronoun.span.round, ",",
                    ann.pronoun.span.start, ")");
        }
        if (ann.antecedents) {
            for (int idx : *ann.antecedents)
                require(idx >= 0 && idx < static_cast<int>(ann.candidates.size()), "dialog '",
                        d.id, "': antecedent index ", idx, " out of ", ann.candidates.size(),
                        " candidates");
            // every pronoun-antecedent pair must share a cluster
            for (int idx : *ann.antecedents) {
                const Span& a = ann.candidates[static_cast<std::size_t>(idx)].span;
                bool found = false;
                for (const CoreferenceCluster& c : d.clusters)
                    if (mention_in_cluster(c, ann.pronoun.span) && mention_in_cluster(c, a)) {
                        found = true;
                        break;
                    }
                require(found || d.clusters.empty(), "dialog '", d.id,
                        "': pronoun and antecedent are not co-clustered");
            }
        }
    }
    for (const CoreferenceCluster& c : d.clusters) {
        require(c.mentions.size() >= 2, "dialog '", d.id, "': cluster with ", c.mentions.size(),
                " mention(s)");
        for (const Mention& m : c.mentions) check_span(d, m.span, "cluster mention");
    }
}

namespace {

ordered_json span_to_json(const Span& s) { return ordered_json::array({s.round, s.start, s.end}); }

Span span_from_json(const ordered_json& j) {
    require(j.is_array() && j.size() == 3, "span must be a [round,start,end] triple");
    return Span{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

Mention mention_from_span(const Dialog& d, const Span& s) {
    Mention m{s, MentionKind::NounPhrase};
    if (s.start == s.end) {
        const auto tok = d.span_tokens(s);
        if (is_pronoun_surface(tok.front())) m.kind = MentionKind::Pronoun;
    }
    return m;
}

ordered_json dialog_to_json(const Dialog& d) {
    ordered_json j;
    j["id"] = d.id;
    j["visual_features"] = d.visual_features;
    j["caption"] = join_tokens(d.caption);
    auto& rounds = j["rounds"] = ordered_json::array();
    for (const Round& r : d.rounds) {
        ordered_json rj;
        rj["question"] = join_tokens(r.question);
        auto& answers = rj["answers"] = ordered_json::array();
        for (const auto& a : r.answers) answers.push_back(join_tokens(a));
        rj["gt_index"] = r.gt_index ? ordered_json(*r.gt_index) : ordered_json(nullptr);
        rj["dense_scores"] =
            r.dense_scores ? ordered_json(*r.dense_scores) : ordered_json(nullptr);
        rounds.push_back(std::move(rj));
    }
    auto& coref = j["coref"] = ordered_json::array();
    for (const CorefAnnotation& ann : d.coref) {
        ordered_json aj;
        aj["pronoun"] = span_to_json(ann.pronoun.span);
        auto& cands = aj["candidates"] = ordered_json::array();
        for (const Mention& c : ann.candidates) cands.push_back(span_to_json(c.span));
        if (ann.antecedents) {
            auto& ants = aj["antecedents"] = ordered_json::array();
            for (int idx : *ann.antecedents)
                ants.push_back(span_to_json(ann.candidates[static_cast<std::size_t>(idx)].span));
        } else {
            aj["antecedents"] = nullptr;
        }
        aj["source"] = ann.source == CorefSource::Gold ? "gold" : "pseudo";
        coref.push_back(std::move(aj));
    }
    auto& clusters = j["clusters"] = ordered_json::array();
    for (const CoreferenceCluster& c : d.clusters) {
        ordered_json cj = ordered_json::array();
        for (const Mention& m : c.mentions) cj.push_back(span_to_json(m.span));
        clusters.push_back(std::move(cj));
    }
    return j;
}

Dialog dialog_from_json(const ordered_json& j) {
    Dialog d;
    d.id = j.at("id").get<std::string>();
    d.visual_features = j.at("visual_features").get<std::vector<std::vector<double>>>();
    d.caption = tokenize(j.at("caption").get<std::string>());
    for (const auto& rj : j.at("rounds")) {
        Round r;
        r.question = tokenize(rj.at("question").get<std::string>());
        for (const auto& aj : rj.at("answers")) r.answers.push_back(tokenize(aj.get<std::string>()));
        if (!rj.at("gt_index").is_null()) r.gt_index = rj.at("gt_index").get<int>();
        if (!rj.at("dense_scores").is_null())
            r.dense_scores = rj.at("dense_scores").get<std::vector<double>>();
        d.rounds.push_back(std::move(r));
    }
    for (const auto& aj : j.value("coref", ordered_json::array())) {
        CorefAnnotation ann;
        const Span pspan = span_from_json(aj.at("pronoun"));
        ann.pronoun = Mention{pspan, MentionKind::Pronoun};
        for (const auto& cj : aj.at("candidates"))
            ann.candidates.push_back(mention_from_span(d, span_from_json(cj)));
        if (!aj.at("antecedents").is_null()) {
            std::vector<int> idx;
            for (const auto& sj : aj.at("antecedents")) {
                const Span s = span_from_json(sj);
                auto it = std::find_if(ann.candidates.begin(), ann.candidates.end(),
                                       [&](const Mention& m) { return m.span == s; });
                require(it != ann.candidates.end(), "dialog '", d.id, "': antecedent (", s.round,
                        ",", s.start, ",", s.end, ") is not among the candidates");
                idx.push_back(static_cast<int>(it - ann.candidates.begin()));
            }
            ann.antecedents = std::move(idx);
        }
        const std::string src = aj.value("source", "gold");
        require(src == "gold" || src == "pseudo", "dialog '", d.id, "': bad coref source '", src,
                "'");
        ann.source = src == "gold" ? CorefSource::Gold : CorefSource::Pseudo;
        d.coref.push_back(std::move(ann));
    }
    for (const auto& cj : j.value("clusters", ordered_json::array())) {
        CoreferenceCluster c;
        for (const auto& sj : cj) c.mentions.push_back(mention_from_span(d, span_from_json(sj)));
        d.clusters.push_back(std::move(c));
    }
    return d;
}

}  // namespace

std::pair<std::vector<Dialog>, Vocabulary> load_corpus(const std::string& path,
                                                       const std::optional<Vocabulary>& vocab) {
    std::ifstream is(path);
    require(is.good(), "cannot open corpus '", path, "'");
    std::vector<Dialog> dialogs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        Dialog d;
        try {
            d = dialog_from_json(ordered_json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            fail("'", path, "' line ", lineno, ": malformed record: ", e.what());
        }
        validate_dialog(d);
        dialogs.push_back(std::move(d));
    }
    Vocabulary v = vocab ? *vocab : build_vocabulary(dialogs);
    return {std::move(dialogs), std::move(v)};
}

void save_corpus(const std::vector<Dialog>& dialogs, const std::string& path) {
    std::ofstream os(path);
    require(os.good(), "cannot open '", path, "' for writing");
    for (const Dialog& d : dialogs) os << dialog_to_json(d).dump() << "\n";
    require(os.good(), "write failed for '", path, "'");
}

Vocabulary build_vocabulary(const std::vector<Dialog>& dialogs) {
    // ids follow first appearance in corpus order
    Vocabulary v;
    for (const Dialog& d : dialogs) {
        for (const auto& t : d.caption) v.add(t);
        for (const Round& r : d.rounds) {
            for (const auto& t : r.question) v.add(t);
            for (const auto& a : r.answers)
                for (const auto& t : a) v.add(t);
        }
    }
    return v;
}

Dialog strip_coref_labels(Dialog d) {
    for (CorefAnnotation& ann : d.coref) {
        ann.antecedents.reset();
        ann.source = CorefSource::Gold;
    }
    d.clusters.clear();
    return d;
}

bool structurally_equal(const Dialog& a, const Dialog& b) {
    return dialog_to_json(a) == dialog_to_json(b);
}

}  // namespace vdpcr
