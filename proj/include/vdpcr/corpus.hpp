#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace vdpcr {

// Reserved token ids. The remaining vocabulary starts at kFirstRegularId.
inline constexpr int kImgId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kPadId = 4;
inline constexpr int kUnkId = 5;
inline constexpr int kFirstRegularId = 6;

const std::vector<std::string>& pronoun_inventory();
bool is_pronoun_surface(const std::string& surface);

// lowercase + whitespace split
std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

class Vocabulary {
public:
    Vocabulary();

    int add(const std::string& surface);      // idempotent; returns id
    int id(const std::string& surface) const; // kUnkId when unknown
    bool contains(const std::string& surface) const;
    const std::string& surface(int id) const;
    std::size_t size() const { return id_to_surface_.size(); }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    const std::vector<std::string>& surfaces() const { return id_to_surface_; }
    static Vocabulary from_surfaces(const std::vector<std::string>& all);  // incl. specials

private:
    std::unordered_map<std::string, int> surface_to_id_;
    std::vector<std::string> id_to_surface_;
};

// round -1 addresses the caption; offsets are inclusive and index into the
// utterance (caption tokens, or question tokens followed by the ground-truth
// answer tokens for a QA round).
struct Span {
    int round = 0;
    int start = 0;
    int end = 0;

    friend bool operator==(const Span&, const Span&) = default;
    friend auto operator<=>(const Span&, const Span&) = default;
};

enum class MentionKind { Pronoun, NounPhrase };

struct Mention {
    Span span;
    MentionKind kind = MentionKind::NounPhrase;

    friend bool operator==(const Mention&, const Mention&) = default;
};

enum class CorefSource { Gold, Pseudo };

struct CorefAnnotation {
    Mention pronoun;
    std::vector<Mention> candidates;  // dialog order, all strictly before the pronoun
    // indices into candidates; nullopt = unlabeled, empty = non-referential
    std::optional<std::vector<int>> antecedents;
    CorefSource source = CorefSource::Gold;

    bool labeled() const { return antecedents.has_value(); }
    bool referential() const { return labeled() && !antecedents->empty(); }
};

struct CoreferenceCluster {
    std::vector<Mention> mentions;
};

struct Round {
    std::vector<std::string> question;
    std::vector<std::vector<std::string>> answers;
    std::optional<int> gt_index;
    std::optional<std::vector<double>> dense_scores;
};

struct Dialog {
    std::string id;
    std::vector<std::vector<double>> visual_features;
    std::vector<std::string> caption;
    std::vector<Round> rounds;
    std::vector<CorefAnnotation> coref;
    std::vector<CoreferenceCluster> clusters;

    // caption, or question + ground-truth answer of a round
    std::vector<std::string> utterance_tokens(int round) const;
    std::size_t utterance_len(int round) const;
    std::vector<std::string> span_tokens(const Span& s) const;
};

void validate_dialog(const Dialog& d);

std::pair<std::vector<Dialog>, Vocabulary> load_corpus(
    const std::string& path, const std::optional<Vocabulary>& vocab = std::nullopt);
void save_corpus(const std::vector<Dialog>& dialogs, const std::string& path);

Vocabulary build_vocabulary(const std::vector<Dialog>& dialogs);

// Drops antecedent labels and clusters, keeping pronoun and candidate spans.
Dialog strip_coref_labels(Dialog d);

bool structurally_equal(const Dialog& a, const Dialog& b);

}  // namespace vdpcr
