#include "slt/decoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "slt/error.hpp"

namespace slt {

void DecoderConfig::validate() const {
    if (vocab < 4) throw ConfigError("decoder config: vocab must cover specials plus content");
    if (d_model == 0 || heads == 0 || d_model % heads != 0) {
        throw ConfigError("decoder config: d_model " + std::to_string(d_model) +
                          " not divisible by " + std::to_string(heads) + " heads");
    }
    if (layers == 0) throw ConfigError("decoder config: need at least one layer");
    if (ffn == 0) throw ConfigError("decoder config: ffn width must be positive");
    if (lora_rank <= 0) throw ConfigError("decoder config: lora rank must be positive");
    if (lora_alpha <= 0.0) throw ConfigError("decoder config: lora alpha must be positive");
}

namespace {

bool valid_token(const std::string& token) {
    if (token.empty()) return false;
    for (char c : token) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return false;
    }
    return true;
}

} // namespace

Tokenizer Tokenizer::build(const std::vector<std::string>& words) {
    Tokenizer t;
    t.bos_ = t.add_token("<bos>");
    t.eos_ = t.add_token("<eos>");
    t.unk_ = t.add_token("<unk>");
    for (const std::string& word : words) {
        if (t.id_of(word) == -1) t.add_token(word);
    }
    return t;
}

int Tokenizer::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

const std::string& Tokenizer::token(std::size_t id) const {
    if (id >= tokens_.size()) {
        throw VocabularyError("tokenizer: id " + std::to_string(id) + " outside table of " +
                              std::to_string(tokens_.size()));
    }
    return tokens_[id];
}

int Tokenizer::add_token(const std::string& token) {
    if (!valid_token(token)) {
        throw VocabularyError("tokenizer: token may not be empty or contain whitespace");
    }
    if (index_.count(token)) {
        throw VocabularyError("tokenizer: token '" + token + "' already present");
    }
    int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        int id = id_of(word);
        ids.push_back(id == -1 ? unk_ : id);
    }
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == bos_ || id == eos_) continue;
        const std::string& tok = token(static_cast<std::size_t>(std::max(id, -1)));
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

void Tokenizer::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("tokenizer: cannot write " + path.string());
    out << "bos=" << bos_ << " eos=" << eos_ << " unk=" << unk_ << "\n";
    for (std::size_t id = 0; id < tokens_.size(); ++id) {
        out << tokens_[id] << '\t' << id << "\n";
    }
    if (!out) throw IoError("tokenizer: failed writing " + path.string());
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("tokenizer: cannot read " + path.string());

    std::string header;
    if (!std::getline(in, header)) throw FormatError("tokenizer: missing header");
    Tokenizer t;
    {
        std::istringstream hs(header);
        std::string field;
        for (int* slot : {&t.bos_, &t.eos_, &t.unk_}) {
            if (!(hs >> field)) throw FormatError("tokenizer: malformed header '" + header + "'");
            std::size_t eq = field.find('=');
            if (eq == std::string::npos) {
                throw FormatError("tokenizer: malformed header '" + header + "'");
            }
            try {
                *slot = std::stoi(field.substr(eq + 1));
            } catch (const std::exception&) {
                throw FormatError("tokenizer: malformed header '" + header + "'");
            }
        }
        if (hs >> field) throw FormatError("tokenizer: trailing header fields");
    }

    std::string line;
    std::vector<std::string> by_id;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError("tokenizer: line " + std::to_string(line_no) + " has no tab");
        }
        std::string token = line.substr(0, tab);
        std::size_t id = 0;
        try {
            id = static_cast<std::size_t>(std::stoul(line.substr(tab + 1)));
        } catch (const std::exception&) {
            throw FormatError("tokenizer: line " + std::to_string(line_no) + " has a bad id");
        }
        if (!valid_token(token)) {
            throw FormatError("tokenizer: line " + std::to_string(line_no) + " has a bad token");
        }
        if (by_id.size() <= id) by_id.resize(id + 1);
        if (!by_id[id].empty()) {
            throw FormatError("tokenizer: duplicate id " + std::to_string(id));
        }
        by_id[id] = token;
    }
    for (std::size_t id = 0; id < by_id.size(); ++id) {
        if (by_id[id].empty()) throw FormatError("tokenizer: id table has gaps");
        if (t.index_.count(by_id[id])) {
            throw FormatError("tokenizer: duplicate token '" + by_id[id] + "'");
        }
        t.tokens_.push_back(by_id[id]);
        t.index_.emplace(by_id[id], static_cast<int>(id));
    }
    auto special_ok = [&](int id) {
        return id >= 0 && static_cast<std::size_t>(id) < t.tokens_.size();
    };
    if (!special_ok(t.bos_) || !special_ok(t.eos_) || !special_ok(t.unk_)) {
        throw FormatError("tokenizer: special ids outside the table");
    }
    return t;
}

Var gated_attention(const Var& q, const Var& k, const Var& v, const Var& gates,
                    std::size_t heads) {
    if (gates->value.numel() != heads) {
        throw ConfigError("gated_attention: " + std::to_string(gates->value.numel()) +
                          " gates for " + std::to_string(heads) + " heads");
    }
    Var clamped = clamp_inclusive(gates, 0.0, 1.0);
    return attention_core(q, k, v, heads, nullptr, &clamped);
}

DecoderBlock::DecoderBlock(const DecoderConfig& cfg, Rng& rng)
    : heads_(cfg.heads),
      ln1_(cfg.d_model),
      ln2_(cfg.d_model),
      q_(cfg.d_model, cfg.d_model, true, rng),
      v_(cfg.d_model, cfg.d_model, true, rng),
      k_(cfg.d_model, cfg.d_model, true, rng),
      o_(cfg.d_model, cfg.d_model, true, rng),
      mlp_in_(cfg.d_model, cfg.ffn, true, rng),
      mlp_out_(cfg.ffn, cfg.d_model, true, rng) {
    register_module("ln1", ln1_);
    register_module("ln2", ln2_);
    register_module("q", q_);
    register_module("k", k_);
    register_module("v", v_);
    register_module("o", o_);
    register_module("mlp_in", mlp_in_);
    register_module("mlp_out", mlp_out_);
}

void DecoderBlock::adapt_cross(int rank, double alpha, Rng& rng) {
    if (cross_q_) throw ConfigError("decoder block: cross attention already adapted");
    std::size_t d = q_.in_features();
    cross_q_ = std::make_unique<LoraDelta>(d, d, rank, alpha, rng);
    cross_v_ = std::make_unique<LoraDelta>(d, d, rank, alpha, rng);
    gates_ = Parameter(Tensor::zeros({heads_}));
    register_module("cross_q", *cross_q_);
    register_module("cross_v", *cross_v_);
    register_parameter("gates", gates_);
}

Parameter& DecoderBlock::gates() {
    if (!cross_q_) throw ConfigError("decoder block: no gates before adapt_cross");
    return gates_;
}

LoraDelta& DecoderBlock::cross_q() {
    if (!cross_q_) throw ConfigError("decoder block: cross attention not adapted");
    return *cross_q_;
}

LoraDelta& DecoderBlock::cross_v() {
    if (!cross_v_) throw ConfigError("decoder block: cross attention not adapted");
    return *cross_v_;
}

Var DecoderBlock::forward(const Var& x, const Var* sign, bool frozen_path) {
    Var n1 = ln1_.forward(x);
    Tensor mask = causal_mask(x->value.rows());
    Var mq = frozen_path ? q_.base_forward(n1) : q_.forward(n1);
    Var mv = frozen_path ? v_.base_forward(n1) : v_.forward(n1);
    Var masked = o_.forward(attention_core(mq, k_.forward(n1), mv, heads_, &mask, nullptr));
    Var stream = add(x, masked);

    if (sign && !frozen_path) {
        if (!cross_q_) throw ConfigError("decoder block: cross attention not adapted");
        Var sn = ln1_.forward(*sign);
        Var cq = add(q_.base_forward(n1), cross_q_->apply(n1));
        Var cv = add(v_.base_forward(sn), cross_v_->apply(sn));
        Var gate = clamp_inclusive(leaf(gates_), 0.0, 1.0);
        Var gated = attention_core(cq, k_.forward(sn), cv, heads_, nullptr, &gate);
        // Weight-only output map: reusing o's bias would leak a constant into
        // the residual stream even with every gate at zero.
        Var cross = matmul(gated, transpose(leaf(o_.weight())));
        stream = add(stream, cross);
    }

    Var n2 = ln2_.forward(stream);
    return add(stream, mlp_out_.forward(gelu(mlp_in_.forward(n2))));
}

std::vector<int> beam_search(const StepFn& step, int bos, int eos, std::size_t width,
                             std::size_t max_len) {
    if (width < 1) throw ConfigError("beam_search: width must be at least 1");
    if (max_len < 1) throw ConfigError("beam_search: max_len must be at least 1");

    struct Hyp {
        std::vector<int> seq;
        double score = 0.0;
        bool complete = false;
    };
    auto better = [](const Hyp& a, const Hyp& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.seq != b.seq) return a.seq < b.seq;
        return a.complete && !b.complete;
    };
    auto log_probs = [&](const Hyp& h) {
        std::vector<int> prefix;
        prefix.reserve(h.seq.size() + 1);
        prefix.push_back(bos);
        prefix.insert(prefix.end(), h.seq.begin(), h.seq.end());
        std::vector<double> lp = step(prefix);
        if (eos < 0 || static_cast<std::size_t>(eos) >= lp.size()) {
            throw ConfigError("beam_search: eos id outside the step distribution");
        }
        return lp;
    };

    // EOS competes inside the top-width cut, so width 1 reduces to greedy; a
    // finished hypothesis frees its slot.
    std::vector<Hyp> live = {Hyp{}};
    std::vector<Hyp> completed;
    for (std::size_t pos = 0; pos < max_len && !live.empty(); ++pos) {
        std::vector<Hyp> candidates;
        for (const Hyp& h : live) {
            std::vector<double> lp = log_probs(h);
            for (std::size_t tok = 0; tok < lp.size(); ++tok) {
                Hyp next{h.seq, h.score + lp[tok], static_cast<int>(tok) == eos};
                if (!next.complete) next.seq.push_back(static_cast<int>(tok));
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), better);
        if (candidates.size() > width) candidates.resize(width);
        live.clear();
        for (Hyp& h : candidates) {
            (h.complete ? completed : live).push_back(std::move(h));
        }
    }
    // Hypotheses at the length cap still owe their EOS term.
    for (const Hyp& h : live) {
        std::vector<double> lp = log_probs(h);
        completed.push_back(Hyp{h.seq, h.score + lp[static_cast<std::size_t>(eos)], true});
    }

    const Hyp* best = &completed.front();
    for (const Hyp& h : completed) {
        if (better(h, *best)) best = &h;
    }
    return best->seq;
}

FrozenLM::FrozenLM(DecoderConfig cfg, Rng& rng) : cfg_(cfg), final_ln_(cfg.d_model) {
    cfg_.validate();
    Tensor emb({cfg_.vocab, cfg_.d_model});
    for (std::size_t i = 0; i < emb.numel(); ++i) emb[i] = rng.gaussian() * 0.02;
    tok_emb_ = Parameter(std::move(emb));
    register_parameter("tok_emb", tok_emb_);
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
        layers_.push_back(std::make_unique<DecoderBlock>(cfg_, rng));
        register_module("layers." + std::to_string(i), *layers_.back());
    }
    register_module("final_ln", final_ln_);
}

Var FrozenLM::states(const std::vector<int>& ids, const Var* sign, bool frozen_path) {
    if (ids.empty()) throw DimensionError("decoder: empty token sequence");
    if (sign) {
        require_rank((*sign)->value, 2, "decoder sign states");
        if ((*sign)->value.rows() == 0) {
            throw ConfigError("decoder: empty sign conditioning");
        }
        if ((*sign)->value.cols() != cfg_.d_model) {
            throw DimensionError("decoder: sign states " + (*sign)->value.shape_string() +
                                 " do not match width " + std::to_string(cfg_.d_model));
        }
    }
    Var x = embedding_rows(leaf(tok_emb_), ids);
    x = add(x, constant(sinusoidal_positions(ids.size(), cfg_.d_model)));
    for (auto& layer : layers_) x = layer->forward(x, sign, frozen_path);
    return final_ln_.forward(x);
}

Var FrozenLM::forward_logits(const std::vector<int>& ids, const Var* sign) {
    return matmul(states(ids, sign, false), transpose(leaf(tok_emb_)));
}

Var FrozenLM::text_logits(const std::vector<int>& ids) {
    return matmul(states(ids, nullptr, true), transpose(leaf(tok_emb_)));
}

Tensor FrozenLM::next_logits(const std::vector<int>& ids, const Tensor* sign) {
    Var sign_var;
    if (sign) sign_var = constant(*sign);
    Var logits = forward_logits(ids, sign ? &sign_var : nullptr);
    Var last = slice_rows(logits, logits->value.rows() - 1, 1);
    Tensor out({cfg_.vocab});
    for (std::size_t j = 0; j < cfg_.vocab; ++j) out[j] = last->value[j];
    return out;
}

void FrozenLM::freeze() {
    set_trainable(false);
    frozen_ = true;
}

std::size_t FrozenLM::adapt(int rank, double alpha, Rng& rng) {
    if (!frozen_) throw ConfigError("decoder: freeze the language model before adapting");
    if (adapted_) throw ConfigError("decoder: already adapted");
    std::size_t count = inject_adapters(*this, {"q", "v"}, rank, alpha, rng);
    for (auto& layer : layers_) {
        layer->adapt_cross(rank, alpha, rng);
        count += 2;
    }
    adapted_ = true;
    return count;
}

std::size_t FrozenLM::expand_vocabulary(const std::vector<std::string>& new_tokens,
                                        Tokenizer& tokenizer, double sigma, Rng& rng) {
    if (tokenizer.size() != cfg_.vocab) {
        throw ConfigError("decoder: tokenizer size " + std::to_string(tokenizer.size()) +
                          " does not match vocab " + std::to_string(cfg_.vocab));
    }
    for (std::size_t i = 0; i < new_tokens.size(); ++i) {
        if (tokenizer.id_of(new_tokens[i]) != -1) {
            throw VocabularyError("decoder: token '" + new_tokens[i] + "' already present");
        }
        for (std::size_t j = i + 1; j < new_tokens.size(); ++j) {
            if (new_tokens[i] == new_tokens[j]) {
                throw VocabularyError("decoder: token '" + new_tokens[i] + "' listed twice");
            }
        }
    }
    if (new_tokens.empty()) return 0;

    std::size_t v = cfg_.vocab, d = cfg_.d_model, n = new_tokens.size();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += tok_emb_.value.at(i, j);
    }
    for (double& m : mean) m /= static_cast<double>(v);

    Tensor grown({v + n, d});
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < d; ++j) grown.at(i, j) = tok_emb_.value.at(i, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            grown.at(v + i, j) = mean[j] + sigma * rng.gaussian();
        }
    }
    tok_emb_.value = std::move(grown);
    tok_emb_.grad = Tensor::zeros(tok_emb_.value.shape());
    tok_emb_.trainable = false;  // expanded rows stay frozen alongside the base
    for (const std::string& token : new_tokens) tokenizer.add_token(token);
    cfg_.vocab += n;
    return n;
}

std::vector<int> FrozenLM::generate(const Tensor& sign, int bos, int eos, std::size_t width,
                                    std::size_t max_len) {
    StepFn step = [&](const std::vector<int>& prefix) {
        Tensor logits = next_logits(prefix, &sign);
        double top = logits[0];
        for (std::size_t j = 1; j < logits.numel(); ++j) top = std::max(top, logits[j]);
        double lse = 0.0;
        for (std::size_t j = 0; j < logits.numel(); ++j) lse += std::exp(logits[j] - top);
        lse = top + std::log(lse);
        std::vector<double> lp(logits.numel());
        for (std::size_t j = 0; j < logits.numel(); ++j) lp[j] = logits[j] - lse;
        if (bos >= 0 && static_cast<std::size_t>(bos) < lp.size()) {
            lp[static_cast<std::size_t>(bos)] = -std::numeric_limits<double>::infinity();
        }
        return lp;
    };
    return beam_search(step, bos, eos, width, max_len);
}

SignTranslator::SignTranslator(EncoderConfig encoder_cfg, std::size_t feature_dim,
                               DecoderConfig decoder_cfg, Rng& rng)
    : encoder_(encoder_cfg, feature_dim, rng),
      fc_m_(encoder_cfg.hidden, decoder_cfg.d_model, true, rng),
      lm_(decoder_cfg, rng) {
    register_module("encoder", encoder_);
    register_module("fc_m", fc_m_);
    register_module("lm", lm_);
}

Var SignTranslator::sign_states(const Var& features) {
    Var z = encoder_.forward(features);
    z = add(z, constant(sinusoidal_positions(z->value.rows(), encoder_.config().hidden)));
    return fc_m_.forward(z);
}

Var SignTranslator::forward_logits(const Var& features, const std::vector<int>& ids) {
    Var sign = sign_states(features);
    return lm_.forward_logits(ids, &sign);
}

std::vector<int> SignTranslator::generate(const Tensor& features, int bos, int eos,
                                          std::size_t width, std::size_t max_len) {
    Tensor sign = sign_states(constant(features))->value;
    return lm_.generate(sign, bos, eos, width, max_len);
}

void SignTranslator::freeze_sign_features() { encoder_.set_trainable(false); }

const std::vector<std::pair<char, std::string>>& default_punctuation_map() {
    static const std::vector<std::pair<char, std::string>> map = {
        {'?', "？"}, {'!', "！"}, {':', "："}, {',', "，"}};
    return map;
}

std::string postprocess_punctuation(const std::string& text,
                                    const std::vector<std::pair<char, std::string>>& mapping) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        const std::string* replacement = nullptr;
        for (const auto& [from, to] : mapping) {
            if (from == c) {
                replacement = &to;
                break;
            }
        }
        if (replacement) {
            out += *replacement;
        } else {
            out += c;
        }
    }
    return out;
}

} // namespace slt
