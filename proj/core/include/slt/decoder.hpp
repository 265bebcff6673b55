#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slt/adapters.hpp"
#include "slt/encoder.hpp"

namespace slt {

struct DecoderConfig {
    std::size_t vocab = 200;  // grows under expand_vocabulary
    std::size_t d_model = 128;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t ffn = 512;
    int lora_rank = 4;
    double lora_alpha = 4.0;

    void validate() const;
};

// Whitespace tokenizer over a fixed table. Ids are dense; <bos>/<eos>/<unk>
// are ordinary rows whose ids are declared in the file header.
class Tokenizer {
public:
    Tokenizer() = default;
    static Tokenizer build(const std::vector<std::string>& words);

    std::size_t size() const { return tokens_.size(); }
    int bos_id() const { return bos_; }
    int eos_id() const { return eos_; }
    int unk_id() const { return unk_; }

    int id_of(const std::string& token) const;  // -1 when absent
    const std::string& token(std::size_t id) const;
    int add_token(const std::string& token);  // duplicate or malformed -> VocabularyError

    std::vector<int> encode(const std::string& text) const;  // no specials added
    std::string decode(const std::vector<int>& ids) const;   // skips bos/eos

    void save(const std::filesystem::path& path) const;
    static Tokenizer load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int bos_ = -1, eos_ = -1, unk_ = -1;
};

// Per-head zero-gated scaled-dot attention: head h is scaled by
// clamp(g_h, 0, 1), so gates stored at zero silence the output while still
// letting gradient reach them from inside the closed interval.
Var gated_attention(const Var& q, const Var& k, const Var& v, const Var& gates,
                    std::size_t heads);

// Pre-norm decoder block: causal self-attention (Q/V LoRA-adaptable) plus an
// optional zero-gated cross-attention branch sharing the frozen projections,
// both summed into the residual stream before the MLP.
class DecoderBlock : public Module {
public:
    DecoderBlock(const DecoderConfig& cfg, Rng& rng);

    // sign == nullptr runs text-only; frozen_path bypasses adapters and the
    // cross branch entirely.
    Var forward(const Var& x, const Var* sign, bool frozen_path);

    void adapt_cross(int rank, double alpha, Rng& rng);
    bool cross_adapted() const { return cross_q_ != nullptr; }
    Parameter& gates();
    LoraDelta& cross_q();
    LoraDelta& cross_v();
    LoraLinear& masked_q() { return q_; }
    LoraLinear& masked_v() { return v_; }

private:
    std::size_t heads_;
    LayerNorm ln1_, ln2_;
    LoraLinear q_, v_;
    Linear k_, o_, mlp_in_, mlp_out_;
    std::unique_ptr<LoraDelta> cross_q_, cross_v_;
    Parameter gates_;  // (heads), created by adapt_cross, stored unconstrained
};

// Next-token log-probabilities for a prefix that starts with BOS.
using StepFn = std::function<std::vector<double>(const std::vector<int>&)>;

// Beam search maximizing summed log-probability of an EOS-terminated
// sequence of content length <= max_len; no length normalization. Ties break
// toward the lexicographically smaller token sequence. Returns content
// tokens only (no BOS/EOS).
std::vector<int> beam_search(const StepFn& step, int bos, int eos, std::size_t width,
                             std::size_t max_len);

// Decoder-only language model. Constructed trainable for its brief text
// pretraining, then freeze()d for good; adapt() attaches LoRA to the masked
// Q/V projections and a zero-gated cross branch per block. The output head
// is weight-tied to the token embeddings.
class FrozenLM : public Module {
public:
    FrozenLM(DecoderConfig cfg, Rng& rng);

    Var forward_logits(const std::vector<int>& ids, const Var* sign);  // adapted path
    Var text_logits(const std::vector<int>& ids);                      // frozen base path
    Tensor next_logits(const std::vector<int>& ids, const Tensor* sign);

    void freeze();
    bool frozen() const { return frozen_; }
    bool adapted() const { return adapted_; }
    std::size_t adapt(int rank, double alpha, Rng& rng);  // returns adapted projection count

    std::size_t expand_vocabulary(const std::vector<std::string>& new_tokens,
                                  Tokenizer& tokenizer, double sigma, Rng& rng);

    std::vector<int> generate(const Tensor& sign, int bos, int eos, std::size_t width,
                              std::size_t max_len);

    const DecoderConfig& config() const { return cfg_; }
    Parameter& embeddings() { return tok_emb_; }
    std::size_t blocks() const { return layers_.size(); }
    DecoderBlock& block(std::size_t i) { return *layers_.at(i); }

private:
    Var states(const std::vector<int>& ids, const Var* sign, bool frozen_path);

    DecoderConfig cfg_;
    Parameter tok_emb_;  // (V x d_model)
    std::vector<std::unique_ptr<DecoderBlock>> layers_;
    LayerNorm final_ln_;
    bool frozen_ = false;
    bool adapted_ = false;
};

// Sign-to-text model: windowed encoder, positional encoding on its output,
// a trainable map into the language model width, and the adapted frozen LM.
class SignTranslator : public Module {
public:
    SignTranslator(EncoderConfig encoder_cfg, std::size_t feature_dim, DecoderConfig decoder_cfg,
                   Rng& rng);

    Var sign_states(const Var& features);  // (T* x feature_dim) -> (T x d_model)
    Var forward_logits(const Var& features, const std::vector<int>& ids);
    std::vector<int> generate(const Tensor& features, int bos, int eos, std::size_t width,
                              std::size_t max_len);

    SignEncoder& encoder() { return encoder_; }
    Linear& fc_m() { return fc_m_; }
    FrozenLM& lm() { return lm_; }

    // Sign(Z) mode: encoder frozen, only decoder-side trainables update.
    void freeze_sign_features();

private:
    SignEncoder encoder_;
    Linear fc_m_;
    FrozenLM lm_;
};

const std::vector<std::pair<char, std::string>>& default_punctuation_map();

// Byte-wise replacement of mapped ASCII punctuation with the configured
// replacement strings; all other bytes pass through untouched.
std::string postprocess_punctuation(const std::string& text,
                                    const std::vector<std::pair<char, std::string>>& mapping);

} // namespace slt
