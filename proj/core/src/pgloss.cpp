#include "slt/pgloss.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace slt {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 17> kUniversalPos = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

constexpr std::array<const char*, 7> kContentPos = {"NOUN", "NUM",  "ADV", "PRON",
                                                    "PROPN", "ADJ", "VERB"};

// Raw temperature value x with softplus(x) == 0.1.
double tau_raw_init() { return std::log(std::expm1(0.1)); }

} // namespace

bool is_universal_pos(const std::string& upos) {
    for (const char* tag : kUniversalPos)
        if (upos == tag) return true;
    return false;
}

bool is_content_pos(const std::string& upos) {
    for (const char* tag : kContentPos)
        if (upos == tag) return true;
    return false;
}

std::vector<std::string> extract_pseudo_glosses(const TaggedSentence& sentence) {
    std::vector<std::string> glosses;
    for (const TagToken& token : sentence.tokens) {
        if (is_content_pos(token.upos)) glosses.push_back(token.lemma);
    }
    return glosses;
}

GlossVocab GlossVocab::build(const std::vector<TaggedSentence>& corpus) {
    if (corpus.empty()) throw ConfigError("gloss vocab: empty corpus");
    GlossVocab vocab;
    std::unordered_map<std::string, int> seen;
    for (const TaggedSentence& sentence : corpus) {
        for (const std::string& gloss : extract_pseudo_glosses(sentence)) {
            if (seen.emplace(gloss, static_cast<int>(vocab.glosses_.size())).second) {
                vocab.glosses_.push_back(gloss);
            }
        }
    }
    if (vocab.glosses_.empty()) throw ConfigError("gloss vocab: corpus has no content words");
    return vocab;
}

GlossVocab GlossVocab::from_glosses(std::vector<std::string> glosses) {
    if (glosses.empty()) throw ConfigError("gloss vocab: empty gloss list");
    GlossVocab vocab;
    std::unordered_map<std::string, int> seen;
    for (std::string& gloss : glosses) {
        if (seen.emplace(gloss, 0).second) vocab.glosses_.push_back(std::move(gloss));
    }
    return vocab;
}

int GlossVocab::index_of(const std::string& gloss) const {
    for (std::size_t i = 0; i < glosses_.size(); ++i) {
        if (glosses_[i] == gloss) return static_cast<int>(i);
    }
    return -1;
}

void GlossVocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const std::string& gloss : glosses_) out << gloss << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

GlossVocab GlossVocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    GlossVocab vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        vocab.glosses_.push_back(line);
    }
    if (vocab.glosses_.empty()) throw FormatError("empty gloss vocab: " + path.string());
    return vocab;
}

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == token) return &vectors[i];
    }
    return nullptr;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << tokens.size() << " " << dim << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        out << tokens[i];
        for (double x : vectors[i]) out << " " << x;
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    EmbeddingTable table;
    std::size_t count = 0;
    std::string header;
    if (!std::getline(in, header)) throw FormatError("empty embedding file: " + path.string());
    {
        std::istringstream hs(header);
        if (!(hs >> count >> table.dim) || table.dim == 0) {
            throw FormatError("bad embedding header: " + path.string());
        }
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) throw FormatError("bad embedding row: " + path.string());
        std::vector<double> vec(table.dim);
        for (double& x : vec) {
            if (!(ls >> x)) {
                throw FormatError("embedding row for '" + token + "' is short: " +
                                  path.string());
            }
        }
        double extra;
        if (ls >> extra) {
            throw FormatError("embedding row for '" + token + "' is long: " + path.string());
        }
        table.tokens.push_back(std::move(token));
        table.vectors.push_back(std::move(vec));
    }
    if (table.tokens.size() != count) {
        throw FormatError("embedding count mismatch: header says " + std::to_string(count) +
                          ", file has " + std::to_string(table.tokens.size()) + ": " +
                          path.string());
    }
    return table;
}

std::vector<TaggedSentence> load_tagged_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<TaggedSentence> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        TaggedSentence sentence;
        try {
            sentence.id = record.at("id").get<std::string>();
            sentence.sentence = record.at("sentence").get<std::string>();
            for (const json& tok : record.at("tokens")) {
                TagToken token;
                token.surface = tok.at("surface").get<std::string>();
                token.lemma = tok.at("lemma").get<std::string>();
                token.upos = tok.at("upos").get<std::string>();
                if (!is_universal_pos(token.upos)) {
                    throw FormatError("corpus line " + std::to_string(lineno) +
                                      ": unknown upos '" + token.upos + "'");
                }
                sentence.tokens.push_back(std::move(token));
            }
        } catch (const json::exception& e) {
            throw FormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        if (sentence.tokens.empty()) {
            throw FormatError("corpus line " + std::to_string(lineno) + ": no tokens");
        }
        corpus.push_back(std::move(sentence));
    }
    return corpus;
}

void save_tagged_corpus(const std::filesystem::path& path,
                        const std::vector<TaggedSentence>& corpus) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const TaggedSentence& sentence : corpus) {
        json record;
        record["id"] = sentence.id;
        record["sentence"] = sentence.sentence;
        json tokens = json::array();
        for (const TagToken& token : sentence.tokens) {
            tokens.push_back({{"surface", token.surface},
                              {"lemma", token.lemma},
                              {"upos", token.upos}});
        }
        record["tokens"] = std::move(tokens);
        out << record.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

PrototypeBank::PrototypeBank(std::size_t input_dim, const GlossVocab& vocab,
                             const EmbeddingTable& embeddings, bool trainable_prototypes,
                             Rng& rng)
    : dim_(embeddings.dim),
      count_(vocab.size() + 1),
      projection_(input_dim, embeddings.dim, true, rng) {
    if (vocab.size() == 0) throw ConfigError("prototype bank: empty vocab");
    if (dim_ == 0) throw ConfigError("prototype bank: zero embedding dim");

    Tensor bank({dim_, count_});
    for (std::size_t j = 0; j < vocab.size(); ++j) {
        const std::vector<double>* vec = embeddings.find(vocab.gloss(j));
        if (!vec) {
            throw VocabularyError("prototype bank: no embedding for gloss '" +
                                  vocab.gloss(j) + "'");
        }
        for (std::size_t i = 0; i < dim_; ++i) bank[i * count_ + j] = (*vec)[i];
    }
    // Final column is the zero prototype; Tensor starts zeroed.
    prototypes_ = Parameter(std::move(bank), trainable_prototypes);
    tau_t_raw_ = Parameter(Tensor::scalar(tau_raw_init()));
    tau_u_raw_ = Parameter(Tensor::scalar(tau_raw_init()));

    register_module("projection", projection_);
    register_parameter("prototypes", prototypes_);
    register_parameter("tau_t_raw", tau_t_raw_);
    register_parameter("tau_u_raw", tau_u_raw_);
}

Var PrototypeBank::project(const Var& z) { return projection_.forward(z); }

Var PrototypeBank::score(const Var& z) {
    constexpr double eps = 1e-6;
    Var projected = project(z);
    Var numer = matmul(projected, leaf(prototypes_));
    Var row_norms = add_scalar(row_l2norm(projected), eps);
    Var col_norms = add_scalar(col_l2norm(leaf(prototypes_)), eps);
    return div_rowvec(div_colvec(numer, row_norms), col_norms);
}

Var PrototypeBank::tau_t() { return softplus(leaf(tau_t_raw_)); }
Var PrototypeBank::tau_u() { return softplus(leaf(tau_u_raw_)); }

PresenceMaps presence(const Var& scores, const Var& tau_t, const Var& tau_u,
                      const std::vector<bool>* valid_steps) {
    require_rank(scores->value, 2, "presence");
    if (tau_t->value.numel() != 1 || tau_u->value.numel() != 1) {
        throw DimensionError("presence: temperatures must be scalar");
    }
    if (!(tau_t->value[0] > 0.0) || !(tau_u->value[0] > 0.0)) {
        throw DomainError("presence: temperatures must be positive");
    }
    std::size_t t = scores->value.rows(), u = scores->value.cols();

    Var time_logits = div_by(scores, tau_t);
    if (valid_steps) {
        if (valid_steps->size() != t) {
            throw DimensionError("presence: valid mask length " +
                                 std::to_string(valid_steps->size()) +
                                 " does not match " + std::to_string(t) + " steps");
        }
        bool any = false;
        for (bool b : *valid_steps) any = any || b;
        if (!any) throw DomainError("presence: no valid timesteps");
        Tensor mask({t, u});
        for (std::size_t i = 0; i < t; ++i) {
            double fill = (*valid_steps)[i] ? 0.0 : -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < u; ++j) mask[i * u + j] = fill;
        }
        time_logits = add(time_logits, constant(std::move(mask)));
    }

    PresenceMaps maps;
    Var over_time = softmax(time_logits, Axis::cols);
    Var over_protos = softmax(div_by(scores, tau_u), Axis::rows);
    maps.joint = mul(over_time, over_protos);
    maps.aggregate = sum_axis0(maps.joint);
    return maps;
}

PresenceMaps presence(const Var& scores, double tau_t, double tau_u,
                      const std::vector<bool>* valid_steps) {
    return presence(scores, constant(tau_t), constant(tau_u), valid_steps);
}

Var bce_presence_loss(const Var& aggregate, const std::vector<double>& targets) {
    require_rank(aggregate->value, 1, "bce_presence_loss");
    std::size_t u = aggregate->value.numel();
    if (u < 2) throw DimensionError("bce_presence_loss: need at least one real prototype");
    if (targets.size() != u - 1) {
        throw DimensionError("bce_presence_loss: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(u - 1) + " glosses");
    }
    for (double t : targets) {
        if (t != 0.0 && t != 1.0) {
            throw DomainError("bce_presence_loss: targets must be 0 or 1");
        }
    }

    Var wide = reshape(aggregate, {1, u});
    Var clipped = clamp(slice_cols(wide, 0, u - 1), 1e-7, 1.0 - 1e-7);
    Tensor pos({1, u - 1}), negt({1, u - 1});
    for (std::size_t j = 0; j + 1 < u; ++j) {
        pos[j] = targets[j];
        negt[j] = 1.0 - targets[j];
    }
    Var ones = constant(Tensor::full({1, u - 1}, 1.0));
    Var term = add(mul(constant(std::move(pos)), log_op(clipped)),
                   mul(constant(std::move(negt)), log_op(sub(ones, clipped))));
    return neg(mean_all(term));
}

std::vector<Span> localize(const Tensor& joint, double threshold) {
    require_rank(joint, 2, "localize");
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw DomainError("localize: threshold must lie in (0, 1)");
    }
    std::size_t t = joint.rows(), u = joint.cols();
    std::vector<Span> spans;
    for (std::size_t j = 0; j + 1 < u; ++j) {  // zero prototype carries no gloss
        std::size_t i = 0;
        while (i < t) {
            if (joint.at(i, j) >= threshold) {
                std::size_t start = i;
                while (i + 1 < t && joint.at(i + 1, j) >= threshold) ++i;
                spans.push_back({j, start, i});
            }
            ++i;
        }
    }
    return spans;
}

double span_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start,
                std::size_t b_end) {
    if (a_end < a_start || b_end < b_start) throw DimensionError("span_iou: end before start");
    std::size_t inter_lo = std::max(a_start, b_start);
    std::size_t inter_hi = std::min(a_end, b_end);
    double inter = inter_hi >= inter_lo ? static_cast<double>(inter_hi - inter_lo + 1) : 0.0;
    double uni = static_cast<double>((a_end - a_start + 1) + (b_end - b_start + 1)) - inter;
    return inter / uni;
}

std::set<std::size_t> presence_set(const Tensor& aggregate, double threshold) {
    require_rank(aggregate, 1, "presence_set");
    std::set<std::size_t> out;
    for (std::size_t j = 0; j + 1 < aggregate.numel(); ++j) {
        if (aggregate[j] >= threshold) out.insert(j);
    }
    return out;
}

Prf1 presence_prf1(const std::vector<std::set<std::size_t>>& predicted,
                   const std::vector<std::set<std::size_t>>& truth) {
    if (predicted.size() != truth.size()) {
        throw DimensionError("presence_prf1: " + std::to_string(predicted.size()) +
                             " predictions vs " + std::to_string(truth.size()) + " truths");
    }
    std::size_t hit = 0, pred_total = 0, true_total = 0;
    for (std::size_t s = 0; s < predicted.size(); ++s) {
        pred_total += predicted[s].size();
        true_total += truth[s].size();
        for (std::size_t index : predicted[s]) hit += truth[s].count(index);
    }
    Prf1 out;
    out.precision = pred_total ? static_cast<double>(hit) / pred_total : 0.0;
    out.recall = true_total ? static_cast<double>(hit) / true_total : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::vector<double> presence_targets(const std::vector<std::string>& glosses,
                                     const GlossVocab& vocab) {
    std::vector<double> targets(vocab.size(), 0.0);
    for (const std::string& gloss : glosses) {
        int index = vocab.index_of(gloss);
        if (index >= 0) targets[static_cast<std::size_t>(index)] = 1.0;
    }
    return targets;
}

} // namespace slt
