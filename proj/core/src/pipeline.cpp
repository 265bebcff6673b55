#include "slt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "slt/adapters.hpp"
#include "slt/autodiff.hpp"
#include "slt/error.hpp"

namespace slt {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'S', '2', 'G', 'C'};
constexpr std::uint16_t kCheckpointVersion = 1;

bool known_stage(const std::string& stage) {
    return stage == "pretrain" || stage == "translate" || stage == "lm";
}

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("truncated checkpoint: " + path.string());
    return value;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::filesystem::path& path) {
    auto len = read_pod<std::uint32_t>(in, path);
    if (len > 4096) throw FormatError("implausible string length in checkpoint: " + path.string());
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw FormatError("truncated checkpoint: " + path.string());
    return s;
}

Var batch_mean(const std::vector<Var>& losses) {
    Var total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0 / static_cast<double>(losses.size()));
}

EmbeddingTable signature_table(const SynthDataset& data) {
    EmbeddingTable table;
    table.dim = data.config.feature_dim;
    table.tokens = data.gloss_names;
    for (std::size_t g = 0; g < data.gloss_names.size(); ++g) {
        std::vector<double> row(table.dim);
        for (std::size_t c = 0; c < table.dim; ++c) {
            row[c] = data.signatures[g * table.dim + c];
        }
        table.vectors.push_back(std::move(row));
    }
    return table;
}

std::string encoder_fingerprint(const EncoderConfig& e) {
    std::ostringstream out;
    out << "enc:" << e.layers << "," << e.hidden << "," << e.heads << "," << e.ffn << ","
        << e.window << "," << e.positions << "," << e.downsample << "," << e.downsample_after
        << "," << e.kernel << "," << e.stride;
    return out.str();
}

std::string train_fingerprint(const TrainConfig& t) {
    std::ostringstream out;
    out.precision(17);
    out << "train:" << t.lr << "," << t.weight_decay << "," << t.clip_norm << "," << t.epochs
        << "," << t.warmup_epochs << "," << t.batch << "," << t.label_smoothing << ","
        << t.frame_subsample_stride << "," << t.seed;
    return out.str();
}

std::string decoder_fingerprint(const DecoderConfig& d) {
    std::ostringstream out;
    out.precision(17);
    out << "dec:" << d.vocab << "," << d.d_model << "," << d.layers << "," << d.heads << ","
        << d.ffn << "," << d.lora_rank << "," << d.lora_alpha;
    return out.str();
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
    if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (warmup_epochs >= epochs) throw ConfigError("train: warmup_epochs must be below epochs");
    if (batch == 0) throw ConfigError("train: batch must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw ConfigError("train: label_smoothing must lie in [0, 1)");
    }
    if (frame_subsample_stride == 0) throw ConfigError("train: frame stride must be positive");
}

double lr_at(double epoch_fraction, const TrainConfig& config) {
    if (epoch_fraction < 0.0 || epoch_fraction > 1.0) {
        throw DomainError("lr_at: epoch fraction outside [0, 1]");
    }
    double w = static_cast<double>(config.warmup_epochs) / static_cast<double>(config.epochs);
    if (w > 0.0 && epoch_fraction <= w) return config.lr * (epoch_fraction / w);
    double u = (epoch_fraction - w) / (1.0 - w);
    return config.lr * 0.5 * (1.0 + std::cos(M_PI * u));
}

Var label_smoothed_ce(const Var& logits, const std::vector<int>& targets, double epsilon,
                      int pad_id) {
    require_rank(logits->value, 2, "label_smoothed_ce");
    std::size_t n = logits->value.rows(), v = logits->value.cols();
    if (targets.size() != n) {
        throw DimensionError("label_smoothed_ce: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(n) + " rows");
    }
    if (epsilon < 0.0 || epsilon >= 1.0) {
        throw ConfigError("label_smoothed_ce: epsilon must lie in [0, 1)");
    }

    std::size_t live = 0;
    for (int t : targets) {
        if (t == pad_id) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= v) {
            throw VocabularyError("label_smoothed_ce: target id " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(v));
        }
        ++live;
    }
    if (live == 0) throw DomainError("label_smoothed_ce: every position is padding");

    Tensor weights({n, v});
    double inv = 1.0 / static_cast<double>(live);
    for (std::size_t i = 0; i < n; ++i) {
        if (targets[i] == pad_id) continue;
        double uniform = epsilon / static_cast<double>(v) * inv;
        for (std::size_t j = 0; j < v; ++j) weights[i * v + j] = uniform;
        weights[i * v + static_cast<std::size_t>(targets[i])] += (1.0 - epsilon) * inv;
    }
    return neg(sum_all(mul(log_softmax_rows(logits), constant(weights))));
}

double global_grad_norm(const std::vector<Parameter*>& params) {
    double sum = 0.0;
    for (const Parameter* p : params) {
        for (std::size_t i = 0; i < p->grad.numel(); ++i) sum += p->grad[i] * p->grad[i];
    }
    return std::sqrt(sum);
}

double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: max_norm must be positive");
    double norm = global_grad_norm(params);
    if (!std::isfinite(norm)) throw DomainError("clip_gradients: non-finite gradient norm");
    if (norm > max_norm) {
        double factor = max_norm / norm;
        for (Parameter* p : params) {
            for (std::size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= factor;
        }
    }
    return norm;
}

Tensor subsample_frames(const Tensor& features, std::size_t stride) {
    require_rank(features, 2, "subsample_frames");
    if (stride == 0) throw ConfigError("subsample_frames: stride must be positive");
    std::size_t t = features.rows(), c = features.cols();
    std::size_t out_t = (t + stride - 1) / stride;
    Tensor out({out_t, c});
    for (std::size_t i = 0; i < out_t; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = features[i * stride * c + j];
    }
    return out;
}

std::optional<std::pair<std::size_t, std::size_t>> project_span(std::size_t start,
                                                                std::size_t end,
                                                                std::size_t subsample_stride,
                                                                std::size_t pool_stride) {
    if (subsample_stride == 0 || pool_stride == 0) {
        throw ConfigError("project_span: strides must be positive");
    }
    if (end < start) throw DomainError("project_span: span ends before it starts");
    std::size_t lo = (start + subsample_stride - 1) / subsample_stride;
    std::size_t hi = end / subsample_stride;
    if (lo > hi) return std::nullopt;
    if (pool_stride == 1) return std::make_pair(lo, hi);
    return pool_span(lo, hi, pool_stride);
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Checkpoint Checkpoint::capture(const Module& module, std::string stage,
                               std::uint64_t config_hash) {
    if (!known_stage(stage)) throw ConfigError("checkpoint: unknown stage '" + stage + "'");
    Checkpoint ckpt;
    ckpt.stage = std::move(stage);
    ckpt.config_hash = config_hash;
    for (const auto& [name, param] : module.named_parameters()) {
        ckpt.params.push_back({name, param->value, param->trainable});
    }
    return ckpt;
}

Checkpoint Checkpoint::subset(const std::string& prefix) const {
    Checkpoint out;
    out.stage = stage;
    out.config_hash = config_hash;
    // Optimizer moments are tied to the full tree and do not transfer.
    for (const ParamEntry& entry : params) {
        if (entry.name.rfind(prefix, 0) == 0) {
            out.params.push_back({entry.name.substr(prefix.size()), entry.value, entry.trainable});
        }
    }
    return out;
}

void Checkpoint::load_into(Module& module, bool strict) const {
    std::unordered_map<std::string, Parameter*> lookup;
    for (const auto& [name, param] : module.named_parameters()) lookup.emplace(name, param);

    std::size_t matched = 0;
    for (const ParamEntry& entry : params) {
        auto it = lookup.find(entry.name);
        if (it == lookup.end()) {
            if (strict) {
                throw ConfigError("checkpoint: module has no parameter '" + entry.name + "'");
            }
            continue;
        }
        Parameter* param = it->second;
        if (param->value.shape() != entry.value.shape()) {
            throw DimensionError("checkpoint: shape mismatch for '" + entry.name + "'");
        }
        param->value = entry.value;
        param->trainable = entry.trainable;
        param->zero_grad();
        ++matched;
    }
    if (strict && matched != lookup.size()) {
        for (const auto& [name, param] : lookup) {
            bool found = false;
            for (const ParamEntry& entry : params) {
                if (entry.name == name) {
                    found = true;
                    break;
                }
            }
            if (!found) throw ConfigError("checkpoint: no entry for parameter '" + name + "'");
        }
    }
}

void Checkpoint::save(const std::filesystem::path& path) const {
    if (!known_stage(stage)) throw ConfigError("checkpoint: unknown stage '" + stage + "'");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kCheckpointMagic, 4);
    write_pod(out, kCheckpointVersion);
    write_string(out, stage);
    write_pod(out, config_hash);
    write_pod(out, optimizer_steps);

    write_pod(out, static_cast<std::uint32_t>(params.size()));
    for (const ParamEntry& entry : params) {
        write_string(out, entry.name);
        write_pod(out, static_cast<std::uint16_t>(entry.value.ndim()));
        for (std::size_t d : entry.value.shape()) write_pod(out, static_cast<std::uint32_t>(d));
        write_pod(out, static_cast<std::uint8_t>(entry.trainable ? 1 : 0));
        for (double x : entry.value.data()) write_pod(out, x);
    }

    write_pod(out, static_cast<std::uint32_t>(moments.size()));
    for (const MomentEntry& entry : moments) {
        write_string(out, entry.name);
        write_pod(out, static_cast<std::uint64_t>(entry.m.size()));
        for (double x : entry.m) write_pod(out, x);
        for (double x : entry.v) write_pod(out, x);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError("not a checkpoint file: " + path.string());
    }
    auto version = read_pod<std::uint16_t>(in, path);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " +
                          path.string());
    }

    Checkpoint ckpt;
    ckpt.stage = read_string(in, path);
    if (!known_stage(ckpt.stage)) {
        throw FormatError("unknown checkpoint stage '" + ckpt.stage + "': " + path.string());
    }
    ckpt.config_hash = read_pod<std::uint64_t>(in, path);
    ckpt.optimizer_steps = read_pod<std::uint64_t>(in, path);

    auto param_count = read_pod<std::uint32_t>(in, path);
    if (param_count > 1u << 20) throw FormatError("implausible parameter count: " + path.string());
    for (std::uint32_t i = 0; i < param_count; ++i) {
        ParamEntry entry;
        entry.name = read_string(in, path);
        auto rank = read_pod<std::uint16_t>(in, path);
        if (rank == 0 || rank > 4) {
            throw FormatError("implausible rank for '" + entry.name + "': " + path.string());
        }
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = read_pod<std::uint32_t>(in, path);
            if (d == 0) throw FormatError("zero dimension in '" + entry.name + "'");
            numel *= d;
        }
        entry.trainable = read_pod<std::uint8_t>(in, path) != 0;
        entry.value = Tensor(shape);
        for (std::size_t k = 0; k < numel; ++k) entry.value[k] = read_pod<double>(in, path);
        ckpt.params.push_back(std::move(entry));
    }

    auto moment_count = read_pod<std::uint32_t>(in, path);
    if (moment_count > 1u << 20) throw FormatError("implausible moment count: " + path.string());
    for (std::uint32_t i = 0; i < moment_count; ++i) {
        MomentEntry entry;
        entry.name = read_string(in, path);
        auto numel = read_pod<std::uint64_t>(in, path);
        if (numel > 1ull << 28) {
            throw FormatError("implausible moment size for '" + entry.name + "'");
        }
        entry.m.resize(numel);
        entry.v.resize(numel);
        for (auto& x : entry.m) x = read_pod<double>(in, path);
        for (auto& x : entry.v) x = read_pod<double>(in, path);
        ckpt.moments.push_back(std::move(entry));
    }

    char extra;
    in.read(&extra, 1);
    if (!in.eof()) throw FormatError("trailing bytes: " + path.string());
    return ckpt;
}

AdamOptimizer::AdamOptimizer(const Module& module, const TrainConfig& config)
    : weight_decay_(config.weight_decay) {
    for (const auto& [name, param] : module.named_parameters()) {
        if (!param->trainable) continue;
        Slot slot;
        slot.name = name;
        slot.param = param;
        slot.m.assign(param->value.numel(), 0.0);
        slot.v.assign(param->value.numel(), 0.0);
        slot.decay = param->value.ndim() >= 2;
        slots_.push_back(std::move(slot));
        flat_.push_back(param);
    }
    if (slots_.empty()) throw ConfigError("adam: module has no trainable parameters");
}

void AdamOptimizer::zero_grad() {
    for (Parameter* p : flat_) p->zero_grad();
}

void AdamOptimizer::step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Slot& slot : slots_) {
        Parameter* p = slot.param;
        if (!p->trainable) continue;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            double g = p->grad[i];
            if (!std::isfinite(g)) {
                throw DomainError("adam: non-finite gradient in '" + slot.name + "'");
            }
            slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
            slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
            double update = (slot.m[i] / bc1) / (std::sqrt(slot.v[i] / bc2) + eps_);
            if (slot.decay) update += weight_decay_ * p->value[i];
            p->value[i] -= lr * update;
        }
    }
}

void AdamOptimizer::state_into(Checkpoint& ckpt) const {
    ckpt.optimizer_steps = t_;
    ckpt.moments.clear();
    for (const Slot& slot : slots_) {
        ckpt.moments.push_back({slot.name, slot.m, slot.v});
    }
}

void AdamOptimizer::state_from(const Checkpoint& ckpt) {
    std::unordered_map<std::string, const Checkpoint::MomentEntry*> lookup;
    for (const auto& entry : ckpt.moments) lookup.emplace(entry.name, &entry);
    for (Slot& slot : slots_) {
        auto it = lookup.find(slot.name);
        if (it == lookup.end()) {
            throw ConfigError("adam: checkpoint has no moments for '" + slot.name + "'");
        }
        if (it->second->m.size() != slot.m.size()) {
            throw DimensionError("adam: moment size mismatch for '" + slot.name + "'");
        }
        slot.m = it->second->m;
        slot.v = it->second->v;
    }
    t_ = ckpt.optimizer_steps;
}

void save_training_log(const std::filesystem::path& path,
                       const std::vector<TrainLogEntry>& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const TrainLogEntry& entry : log) {
        json record;
        record["epoch"] = entry.epoch;
        record["split"] = entry.split;
        record["loss"] = entry.loss;
        record["lr"] = entry.lr;
        record["metric"] = entry.metric;
        out << record.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

PretrainModel::PretrainModel(const EncoderConfig& encoder_cfg, std::size_t feature_dim,
                             const GlossVocab& vocab, const EmbeddingTable& embeddings,
                             bool trainable_prototypes, Rng& rng)
    : encoder_(encoder_cfg, feature_dim, rng),
      bank_(encoder_cfg.hidden, vocab, embeddings, trainable_prototypes, rng) {
    register_module("encoder", encoder_);
    register_module("bank", bank_);
}

PresenceMaps PretrainModel::presence_for(const Tensor& features) {
    Var z = encoder_.forward(constant(features));
    Var s = bank_.score(z);
    return presence(s, bank_.tau_t(), bank_.tau_u());
}

Tensor PretrainModel::presence_matrix(const Tensor& features) {
    return presence_for(features).joint->value;
}

namespace {

std::set<std::size_t> gold_presence(const TaggedSentence& sentence, const GlossVocab& vocab) {
    std::set<std::size_t> gold;
    for (const std::string& gloss : extract_pseudo_glosses(sentence)) {
        int idx = vocab.index_of(gloss);
        if (idx >= 0) gold.insert(static_cast<std::size_t>(idx));
    }
    return gold;
}

} // namespace

PretrainRun pretrain(const SynthDataset& train_set, const SynthDataset& eval_set,
                     const PretrainOptions& options) {
    options.train.validate();
    options.encoder.validate();
    if (train_set.samples.empty()) throw DomainError("pretrain: empty training set");
    if (options.threshold <= 0.0 || options.threshold >= 1.0) {
        throw ConfigError("pretrain: threshold must lie in (0, 1)");
    }
    const TrainConfig& cfg = options.train;

    std::vector<TaggedSentence> corpus;
    for (const SynthSample& sample : train_set.samples) corpus.push_back(sample.sentence);
    GlossVocab vocab = GlossVocab::build(corpus);
    EmbeddingTable table = signature_table(train_set);

    PretrainRun run;
    run.vocab = vocab;
    Rng root(cfg.seed);
    Rng init_rng = root.fork(0);
    run.model = std::make_unique<PretrainModel>(options.encoder, train_set.config.feature_dim,
                                                vocab, table, options.trainable_prototypes,
                                                init_rng);

    std::vector<Tensor> feats;
    std::vector<std::vector<double>> targets;
    for (const SynthSample& sample : train_set.samples) {
        feats.push_back(subsample_frames(sample.features, cfg.frame_subsample_stride));
        targets.push_back(
            presence_targets(extract_pseudo_glosses(sample.sentence), vocab));
    }
    std::vector<Tensor> eval_feats;
    std::vector<std::vector<double>> eval_targets;
    std::vector<std::set<std::size_t>> eval_gold;
    for (const SynthSample& sample : eval_set.samples) {
        eval_feats.push_back(subsample_frames(sample.features, cfg.frame_subsample_stride));
        eval_targets.push_back(
            presence_targets(extract_pseudo_glosses(sample.sentence), vocab));
        eval_gold.push_back(gold_presence(sample.sentence, vocab));
    }

    AdamOptimizer opt(*run.model, cfg);
    std::size_t n = feats.size();
    std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    std::size_t total_steps = steps_per_epoch * cfg.epochs;
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = root.fork(1000 + epoch);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        double lr = 0.0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch) {
            std::size_t count = std::min(cfg.batch, n - begin);
            opt.zero_grad();
            std::vector<Var> losses;
            for (std::size_t k = 0; k < count; ++k) {
                std::size_t idx = order[begin + k];
                PresenceMaps maps = run.model->presence_for(feats[idx]);
                losses.push_back(bce_presence_loss(maps.aggregate, targets[idx]));
            }
            Var loss = batch_mean(losses);
            backward(loss);
            clip_gradients(opt.params(), cfg.clip_norm);
            ++global_step;
            lr = lr_at(static_cast<double>(global_step) / static_cast<double>(total_steps), cfg);
            opt.step(lr);
            epoch_loss += loss->value[0] * static_cast<double>(count);
        }
        epoch_loss /= static_cast<double>(n);

        double eval_loss = 0.0;
        std::vector<std::set<std::size_t>> predicted;
        for (std::size_t i = 0; i < eval_feats.size(); ++i) {
            PresenceMaps maps = run.model->presence_for(eval_feats[i]);
            eval_loss += bce_presence_loss(maps.aggregate, eval_targets[i])->value[0];
            predicted.push_back(presence_set(maps.aggregate->value, options.threshold));
        }
        double f1 = 0.0;
        if (!eval_feats.empty()) {
            eval_loss /= static_cast<double>(eval_feats.size());
            f1 = presence_prf1(predicted, eval_gold).f1;
        }

        run.train_losses.push_back(epoch_loss);
        run.eval_f1.push_back(f1);
        run.log.push_back({epoch, "train", epoch_loss, lr, 0.0});
        run.log.push_back({epoch, "eval", eval_loss, lr, f1});
    }

    std::uint64_t hash = fnv1a("pretrain|" + train_fingerprint(cfg) + "|" +
                               encoder_fingerprint(options.encoder));
    run.checkpoint = Checkpoint::capture(*run.model, "pretrain", hash);
    opt.state_into(run.checkpoint);
    return run;
}

std::vector<TrainLogEntry> pretrain_lm(FrozenLM& lm,
                                       const std::vector<std::vector<int>>& contents,
                                       int bos, int eos, const TrainConfig& config) {
    if (lm.frozen()) throw ConfigError("pretrain_lm: model is already frozen");
    if (contents.empty()) throw DomainError("pretrain_lm: empty corpus");

    AdamOptimizer opt(lm, config);
    Rng root(config.seed);
    std::vector<TrainLogEntry> log;
    std::size_t n = contents.size();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = root.fork(2000 + epoch);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < n; begin += config.batch) {
            std::size_t count = std::min(config.batch, n - begin);
            opt.zero_grad();
            std::vector<Var> losses;
            for (std::size_t k = 0; k < count; ++k) {
                const std::vector<int>& content = contents[order[begin + k]];
                std::vector<int> input = {bos};
                input.insert(input.end(), content.begin(), content.end());
                std::vector<int> target(content.begin(), content.end());
                target.push_back(eos);
                Var logits = lm.text_logits(input);
                losses.push_back(label_smoothed_ce(logits, target, config.label_smoothing));
            }
            Var loss = batch_mean(losses);
            backward(loss);
            clip_gradients(opt.params(), config.clip_norm);
            opt.step(config.lr);
            epoch_loss += loss->value[0] * static_cast<double>(count);
        }
        epoch_loss /= static_cast<double>(n);
        log.push_back({epoch, "train", epoch_loss, config.lr, 0.0});
    }
    return log;
}

std::string surface_text(const TaggedSentence& sentence) {
    std::string text;
    for (const TagToken& tok : sentence.tokens) {
        if (!text.empty()) text += " ";
        text += tok.surface;
    }
    return text;
}

std::vector<int> encode_surfaces(const Tokenizer& tokenizer, const TaggedSentence& sentence) {
    std::vector<int> ids;
    ids.reserve(sentence.tokens.size());
    for (const TagToken& tok : sentence.tokens) {
        int id = tokenizer.id_of(tok.surface);
        ids.push_back(id >= 0 ? id : tokenizer.unk_id());
    }
    return ids;
}

TranslationRun train_translation(const SynthDataset& train_set, const SynthDataset& eval_set,
                                 const TranslationOptions& options) {
    options.train.validate();
    options.encoder.validate();
    if (train_set.samples.empty()) throw DomainError("train_translation: empty training set");
    if (options.lm_epochs == 0) throw ConfigError("train_translation: lm_epochs must be positive");
    const TrainConfig& cfg = options.train;

    const std::vector<TaggedSentence>* lm_corpus = options.lm_corpus;
    std::vector<TaggedSentence> own_corpus;
    if (lm_corpus == nullptr) {
        for (const SynthSample& sample : train_set.samples) {
            own_corpus.push_back(sample.sentence);
        }
        lm_corpus = &own_corpus;
    }
    if (lm_corpus->empty()) throw DomainError("train_translation: empty language corpus");

    TranslationRun run;
    std::vector<std::string> words;
    for (const TaggedSentence& sentence : *lm_corpus) {
        for (const TagToken& tok : sentence.tokens) words.push_back(tok.surface);
    }
    run.tokenizer = Tokenizer::build(words);

    DecoderConfig dec_cfg = options.decoder;
    dec_cfg.vocab = run.tokenizer.size();
    dec_cfg.validate();

    Rng root(cfg.seed);
    Rng init_rng = root.fork(0);
    run.model = std::make_unique<SignTranslator>(options.encoder, train_set.config.feature_dim,
                                                 dec_cfg, init_rng);
    FrozenLM& lm = run.model->lm();

    std::vector<std::vector<int>> lm_contents;
    for (const TaggedSentence& sentence : *lm_corpus) {
        lm_contents.push_back(encode_surfaces(run.tokenizer, sentence));
    }
    TrainConfig lm_cfg = cfg;
    lm_cfg.epochs = options.lm_epochs;
    lm_cfg.warmup_epochs = 0;  // pretrain_lm runs a constant learning rate
    pretrain_lm(lm, lm_contents, run.tokenizer.bos_id(), run.tokenizer.eos_id(), lm_cfg);
    lm.freeze();

    std::vector<std::string> unseen;
    {
        std::unordered_set<std::string> queued;
        for (const SynthSample& sample : train_set.samples) {
            for (const TagToken& tok : sample.sentence.tokens) {
                if (run.tokenizer.id_of(tok.surface) < 0 && queued.insert(tok.surface).second) {
                    unseen.push_back(tok.surface);
                }
            }
        }
    }
    if (!unseen.empty()) {
        Rng expand_rng = root.fork(1);
        run.expanded =
            lm.expand_vocabulary(unseen, run.tokenizer, options.expand_sigma, expand_rng);
    }

    Rng adapt_rng = root.fork(2);
    lm.adapt(dec_cfg.lora_rank, dec_cfg.lora_alpha, adapt_rng);

    if (options.encoder_init != nullptr) {
        if (options.encoder_init->stage != "pretrain") {
            throw ConfigError("train_translation: encoder init must be a pretrain checkpoint");
        }
        options.encoder_init->subset("encoder.").load_into(run.model->encoder());
    }
    if (options.frozen_features) run.model->freeze_sign_features();

    std::vector<Tensor> feats;
    std::vector<std::vector<int>> inputs, targets;
    for (const SynthSample& sample : train_set.samples) {
        feats.push_back(subsample_frames(sample.features, cfg.frame_subsample_stride));
        std::vector<int> content = encode_surfaces(run.tokenizer, sample.sentence);
        std::vector<int> input = {run.tokenizer.bos_id()};
        input.insert(input.end(), content.begin(), content.end());
        std::vector<int> target(content.begin(), content.end());
        target.push_back(run.tokenizer.eos_id());
        inputs.push_back(std::move(input));
        targets.push_back(std::move(target));
    }

    AdamOptimizer opt(*run.model, cfg);
    std::size_t n = feats.size();
    std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    std::size_t total_steps = steps_per_epoch * cfg.epochs;
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = root.fork(1000 + epoch);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        double lr = 0.0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch) {
            std::size_t count = std::min(cfg.batch, n - begin);
            opt.zero_grad();
            std::vector<Var> losses;
            for (std::size_t k = 0; k < count; ++k) {
                std::size_t idx = order[begin + k];
                Var logits = run.model->forward_logits(constant(feats[idx]), inputs[idx]);
                losses.push_back(label_smoothed_ce(logits, targets[idx], cfg.label_smoothing));
            }
            Var loss = batch_mean(losses);
            backward(loss);
            clip_gradients(opt.params(), cfg.clip_norm);
            ++global_step;
            lr = lr_at(static_cast<double>(global_step) / static_cast<double>(total_steps), cfg);
            opt.step(lr);
            epoch_loss += loss->value[0] * static_cast<double>(count);
        }
        epoch_loss /= static_cast<double>(n);

        double eval_loss =
            eval_set.samples.empty() ? 0.0
                                     : translation_loss(*run.model, eval_set, run.tokenizer, cfg);
        run.train_losses.push_back(epoch_loss);
        run.eval_losses.push_back(eval_loss);
        run.log.push_back({epoch, "train", epoch_loss, lr, 0.0});
        run.log.push_back({epoch, "eval", eval_loss, lr, eval_loss});
    }

    run.params = count_parameters(*run.model);
    std::uint64_t hash =
        fnv1a("translate|" + train_fingerprint(cfg) + "|" + encoder_fingerprint(options.encoder) +
              "|" + decoder_fingerprint(dec_cfg) + "|frozen=" +
              (options.frozen_features ? "1" : "0"));
    run.checkpoint = Checkpoint::capture(*run.model, "translate", hash);
    opt.state_into(run.checkpoint);
    return run;
}

double translation_loss(SignTranslator& model, const SynthDataset& data,
                        const Tokenizer& tokenizer, const TrainConfig& config) {
    if (data.samples.empty()) throw DomainError("translation_loss: empty dataset");
    double total = 0.0;
    for (const SynthSample& sample : data.samples) {
        Tensor feats = subsample_frames(sample.features, config.frame_subsample_stride);
        std::vector<int> content = encode_surfaces(tokenizer, sample.sentence);
        std::vector<int> input = {tokenizer.bos_id()};
        input.insert(input.end(), content.begin(), content.end());
        std::vector<int> target(content.begin(), content.end());
        target.push_back(tokenizer.eos_id());
        Var logits = model.forward_logits(constant(feats), input);
        total += label_smoothed_ce(logits, target, config.label_smoothing)->value[0];
    }
    return total / static_cast<double>(data.samples.size());
}

EvalReport translate_corpus(SignTranslator& model, const SynthDataset& data,
                            const Tokenizer& tokenizer, std::size_t stride,
                            std::size_t beam_width, std::size_t max_len,
                            std::vector<std::string>* hyps_out) {
    if (data.samples.empty()) throw DomainError("translate_corpus: empty dataset");
    std::vector<std::string> hyps, refs;
    for (const SynthSample& sample : data.samples) {
        Tensor feats = subsample_frames(sample.features, stride);
        std::vector<int> ids = model.generate(feats, tokenizer.bos_id(), tokenizer.eos_id(),
                                              beam_width, max_len);
        hyps.push_back(tokenizer.decode(ids));
        refs.push_back(surface_text(sample.sentence));
    }
    if (hyps_out != nullptr) *hyps_out = hyps;
    return evaluate_corpus(hyps, refs);
}

SynthDataset slice_dataset(const SynthDataset& data, std::size_t begin, std::size_t end) {
    if (begin > end || end > data.samples.size()) {
        throw DomainError("slice_dataset: invalid range");
    }
    SynthDataset out;
    out.config = data.config;
    out.config.samples = end - begin;
    out.gloss_names = data.gloss_names;
    out.signatures = data.signatures;
    out.samples.assign(data.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       data.samples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

} // namespace slt
