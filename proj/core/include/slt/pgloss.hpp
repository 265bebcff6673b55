#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slt/module.hpp"

namespace slt {

struct TagToken {
    std::string surface;
    std::string lemma;
    std::string upos;
};

struct TaggedSentence {
    std::string id;
    std::string sentence;
    std::vector<TagToken> tokens;
};

bool is_universal_pos(const std::string& upos);
bool is_content_pos(const std::string& upos);

// Lemmas of content words (NOUN, NUM, ADV, PRON, PROPN, ADJ, VERB) in spoken
// order. Duplicates are preserved; presence targets deduplicate later.
std::vector<std::string> extract_pseudo_glosses(const TaggedSentence& sentence);

// Dense gloss index in first-occurrence order. Holds the U-1 real glosses;
// the zero prototype occupies the extra final slot of the bank.
class GlossVocab {
public:
    static GlossVocab build(const std::vector<TaggedSentence>& corpus);
    static GlossVocab from_glosses(std::vector<std::string> glosses);

    std::size_t size() const { return glosses_.size(); }  // U - 1
    int index_of(const std::string& gloss) const;         // -1 when absent
    const std::string& gloss(std::size_t index) const { return glosses_.at(index); }
    const std::vector<std::string>& glosses() const { return glosses_; }

    void save(const std::filesystem::path& path) const;
    static GlossVocab load(const std::filesystem::path& path);

private:
    std::vector<std::string> glosses_;
};

// Word-embedding table: header "count dim", then one token and dim floats per
// line. Prototype initialization looks glosses up here.
struct EmbeddingTable {
    std::size_t dim = 0;
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> vectors;

    const std::vector<double>* find(const std::string& token) const;
    void save(const std::filesystem::path& path) const;
    static EmbeddingTable load(const std::filesystem::path& path);
};

// Tagged corpus storage: one JSON record per line,
// {id, sentence, tokens: [{surface, lemma, upos}]}.
std::vector<TaggedSentence> load_tagged_corpus(const std::filesystem::path& path);
void save_tagged_corpus(const std::filesystem::path& path,
                        const std::vector<TaggedSentence>& corpus);

// Prototype bank: projection C->D, prototypes (D x U) whose first U-1 columns
// come from word embeddings and whose last column starts at exactly zero, and
// two softplus-parameterized temperatures initialized to 0.1.
class PrototypeBank : public Module {
public:
    PrototypeBank(std::size_t input_dim, const GlossVocab& vocab,
                  const EmbeddingTable& embeddings, bool trainable_prototypes, Rng& rng);

    Var project(const Var& z);  // (T x C) -> (T x D)
    Var score(const Var& z);    // epsilon-regularized cosine, (T x U)

    Var tau_t();  // strictly positive by construction
    Var tau_u();

    std::size_t prototypes() const { return count_; }  // U, including the zero slot
    std::size_t embed_dim() const { return dim_; }
    std::size_t input_dim() const { return projection_.in_features(); }
    Parameter& bank() { return prototypes_; }
    Parameter& tau_t_raw() { return tau_t_raw_; }
    Parameter& tau_u_raw() { return tau_u_raw_; }

private:
    std::size_t dim_ = 0, count_ = 0;
    Linear projection_;
    Parameter prototypes_;
    Parameter tau_t_raw_, tau_u_raw_;
};

struct PresenceMaps {
    Var joint;      // E, (T x U)
    Var aggregate;  // E-hat, (U)
};

// Eq.-style presence computation: time-axis and prototype-axis temperature
// softmaxes multiplied elementwise, then summed over time. `valid_steps`
// masks padded rows out of the time-axis softmax.
PresenceMaps presence(const Var& scores, const Var& tau_t, const Var& tau_u,
                      const std::vector<bool>* valid_steps = nullptr);
PresenceMaps presence(const Var& scores, double tau_t, double tau_u,
                      const std::vector<bool>* valid_steps = nullptr);

// Mean BCE over the real glosses; the zero prototype is excluded. Targets are
// per-gloss 0/1 flags of length U-1.
Var bce_presence_loss(const Var& aggregate, const std::vector<double>& targets);

struct Span {
    std::size_t prototype = 0;
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // inclusive

    bool operator==(const Span&) const = default;
};

// Maximal runs of E[:, j] >= threshold per real gloss column.
std::vector<Span> localize(const Tensor& joint, double threshold = 0.2);

double span_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start,
                std::size_t b_end);

// Gloss indices whose aggregate presence clears the threshold (zero prototype
// excluded).
std::set<std::size_t> presence_set(const Tensor& aggregate, double threshold);

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Micro-averaged set retrieval scores over per-sample predictions.
Prf1 presence_prf1(const std::vector<std::set<std::size_t>>& predicted,
                   const std::vector<std::set<std::size_t>>& truth);

// 0/1 target vector (length U-1) for one sentence's extracted glosses.
// Glosses missing from the vocab are skipped: they cannot be supervised.
std::vector<double> presence_targets(const std::vector<std::string>& glosses,
                                     const GlossVocab& vocab);

} // namespace slt
