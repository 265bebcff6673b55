#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slt/decoder.hpp"
#include "slt/encoder.hpp"
#include "slt/metrics.hpp"
#include "slt/pgloss.hpp"
#include "slt/synthdata.hpp"

namespace slt {

struct TrainConfig {
    double lr = 3e-4;
    double weight_decay = 0.001;
    double clip_norm = 1.0;
    std::size_t epochs = 100;
    std::size_t warmup_epochs = 5;
    std::size_t batch = 8;
    double label_smoothing = 0.1;
    std::size_t frame_subsample_stride = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

// One-cycle schedule over the whole run: linear warmup from zero to lr across
// warmup_epochs, then cosine decay to zero. Fraction is elapsed epochs over
// total epochs, in [0, 1].
double lr_at(double epoch_fraction, const TrainConfig& config);

// Mean label-smoothed cross-entropy over non-pad positions. Targets q mix
// (1 - eps) one-hot mass with eps spread uniformly over the vocabulary.
Var label_smoothed_ce(const Var& logits, const std::vector<int>& targets, double epsilon,
                      int pad_id = -1);

double global_grad_norm(const std::vector<Parameter*>& params);
// Scales gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_gradients(const std::vector<Parameter*>& params, double max_norm);

// Keeps every `stride`-th frame, starting at frame zero.
Tensor subsample_frames(const Tensor& features, std::size_t stride);

// Maps a raw-frame gold span through frame subsampling and the encoder's
// temporal pooling. Empty when every frame of the span was dropped.
std::optional<std::pair<std::size_t, std::size_t>> project_span(std::size_t start,
                                                                std::size_t end,
                                                                std::size_t subsample_stride,
                                                                std::size_t pool_stride);

std::uint64_t fnv1a(const std::string& text);

// Parameter snapshot plus optimizer state; doubles end to end so a reload
// reproduces forward outputs bit for bit.
struct Checkpoint {
    struct ParamEntry {
        std::string name;
        Tensor value;
        bool trainable = true;
    };
    struct MomentEntry {
        std::string name;
        std::vector<double> m, v;
    };

    std::string stage;  // pretrain | translate | lm
    std::uint64_t config_hash = 0;
    std::uint64_t optimizer_steps = 0;
    std::vector<ParamEntry> params;
    std::vector<MomentEntry> moments;

    static Checkpoint capture(const Module& module, std::string stage,
                              std::uint64_t config_hash);
    // Entries whose names start with `prefix`, with the prefix stripped.
    Checkpoint subset(const std::string& prefix) const;
    // Strict mode requires the checkpoint and module trees to name exactly
    // the same parameters.
    void load_into(Module& module, bool strict = true) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

// AdamW over the trainable parameters of a module tree. Decoupled weight
// decay applies only to rank >= 2 tensors, which leaves gates, norm scales,
// temperatures, and biases undecayed.
class AdamOptimizer {
public:
    AdamOptimizer(const Module& module, const TrainConfig& config);

    void zero_grad();
    void step(double lr);  // non-finite gradient -> DomainError naming the parameter
    std::size_t steps() const { return t_; }
    const std::vector<Parameter*>& params() const { return flat_; }

    void state_into(Checkpoint& ckpt) const;
    void state_from(const Checkpoint& ckpt);

private:
    struct Slot {
        std::string name;
        Parameter* param = nullptr;
        std::vector<double> m, v;
        bool decay = false;
    };
    std::vector<Slot> slots_;
    std::vector<Parameter*> flat_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    double weight_decay_ = 0.0;
    std::size_t t_ = 0;
};

struct TrainLogEntry {
    std::size_t epoch = 0;
    std::string split;   // train | eval
    double loss = 0.0;
    double lr = 0.0;
    double metric = 0.0;  // eval rows: presence F1 (pretrain) or loss (translate)
};

void save_training_log(const std::filesystem::path& path,
                       const std::vector<TrainLogEntry>& log);

// Sign encoder with the prototype-bank presence head used only during
// pretraining; the head is discarded for translation.
class PretrainModel : public Module {
public:
    PretrainModel(const EncoderConfig& encoder_cfg, std::size_t feature_dim,
                  const GlossVocab& vocab, const EmbeddingTable& embeddings,
                  bool trainable_prototypes, Rng& rng);

    PresenceMaps presence_for(const Tensor& features);  // graph path
    Tensor presence_matrix(const Tensor& features);     // value-only E

    SignEncoder& encoder() { return encoder_; }
    PrototypeBank& bank() { return bank_; }

private:
    SignEncoder encoder_;
    PrototypeBank bank_;
};

struct PretrainOptions {
    EncoderConfig encoder;
    TrainConfig train;
    bool trainable_prototypes = false;
    double threshold = 0.2;
};

struct PretrainRun {
    std::unique_ptr<PretrainModel> model;
    GlossVocab vocab;
    std::vector<TrainLogEntry> log;
    std::vector<double> train_losses;  // one per epoch
    std::vector<double> eval_f1;       // one per epoch
    Checkpoint checkpoint;             // stage "pretrain", optimizer state included
};

PretrainRun pretrain(const SynthDataset& train_set, const SynthDataset& eval_set,
                     const PretrainOptions& options);

// Brief causal-LM warm-up on plain text with a constant learning rate; the
// model must still be unfrozen. Returns one log entry per epoch.
std::vector<TrainLogEntry> pretrain_lm(FrozenLM& lm,
                                       const std::vector<std::vector<int>>& contents,
                                       int bos, int eos, const TrainConfig& config);

std::string surface_text(const TaggedSentence& sentence);
std::vector<int> encode_surfaces(const Tokenizer& tokenizer, const TaggedSentence& sentence);

struct TranslationOptions {
    EncoderConfig encoder;
    DecoderConfig decoder;  // vocab is overwritten from the tokenizer
    TrainConfig train;
    std::size_t lm_epochs = 3;
    bool frozen_features = false;
    double expand_sigma = 0.01;
    const Checkpoint* encoder_init = nullptr;                // stage "pretrain"
    const std::vector<TaggedSentence>* lm_corpus = nullptr;  // defaults to train corpus
};

struct TranslationRun {
    std::unique_ptr<SignTranslator> model;
    Tokenizer tokenizer;
    std::vector<TrainLogEntry> log;
    std::vector<double> train_losses;  // one per epoch
    std::vector<double> eval_losses;   // one per epoch
    std::size_t expanded = 0;          // vocabulary rows added for unseen targets
    ParamReport params;
    Checkpoint checkpoint;             // stage "translate", optimizer state included
};

TranslationRun train_translation(const SynthDataset& train_set, const SynthDataset& eval_set,
                                 const TranslationOptions& options);

// Mean label-smoothed CE over a dataset, value path only.
double translation_loss(SignTranslator& model, const SynthDataset& data,
                        const Tokenizer& tokenizer, const TrainConfig& config);

// Beam-decodes every sample and scores against the surface references.
EvalReport translate_corpus(SignTranslator& model, const SynthDataset& data,
                            const Tokenizer& tokenizer, std::size_t stride,
                            std::size_t beam_width, std::size_t max_len,
                            std::vector<std::string>* hyps_out = nullptr);

// Dataset slice [begin, end) sharing config, gloss names, and signatures.
SynthDataset slice_dataset(const SynthDataset& data, std::size_t begin, std::size_t end);

} // namespace slt
