#include "cli.hpp"

#include "slt/adapters.hpp"
#include "slt/decoder.hpp"
#include "slt/encoder.hpp"
#include "slt/error.hpp"
#include "slt/metrics.hpp"
#include "slt/pgloss.hpp"
#include "slt/pipeline.hpp"
#include "slt/spatial.hpp"
#include "slt/synthdata.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace slt::cli {
namespace {

constexpr const char* kVersion = "0.1.0";

json read_json(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw IoError(what + " not found: '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(what + " '" + path.string() + "': " + e.what());
    }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": bad value for '" + std::string(key) + "'");
    }
}

std::vector<std::string> read_lines(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw IoError(what + " not found: '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_manifest(const fs::path& dir, const std::string& command, const json& resolved,
                    std::uint64_t seed, const json& inputs,
                    const std::vector<std::string>& outputs) {
    json manifest = {
        {"command", command},
        {"config_hash", fnv1a(resolved.dump())},
        {"seed", seed},
        {"versions", {{"sltkit", kVersion}, {"s2gf", 1}, {"s2gc", 1}}},
        {"inputs", inputs},
        {"outputs", outputs},
    };
    write_text(dir / "run_manifest.json", manifest.dump(2) + "\n");
}

SynthConfig synth_config_from(const json& obj, const std::string& where) {
    check_keys(obj,
               {"glosses", "feature_dim", "samples", "min_glosses_per_sample",
                "max_glosses_per_sample", "min_segment", "max_segment", "min_transition",
                "max_transition", "noise", "order", "seed"},
               where);
    SynthConfig cfg;
    cfg.glosses = get_or<std::size_t>(obj, "glosses", cfg.glosses, where);
    cfg.feature_dim = get_or<std::size_t>(obj, "feature_dim", cfg.feature_dim, where);
    cfg.samples = get_or<std::size_t>(obj, "samples", cfg.samples, where);
    cfg.min_glosses_per_sample =
        get_or<std::size_t>(obj, "min_glosses_per_sample", cfg.min_glosses_per_sample, where);
    cfg.max_glosses_per_sample =
        get_or<std::size_t>(obj, "max_glosses_per_sample", cfg.max_glosses_per_sample, where);
    cfg.min_segment = get_or<std::size_t>(obj, "min_segment", cfg.min_segment, where);
    cfg.max_segment = get_or<std::size_t>(obj, "max_segment", cfg.max_segment, where);
    cfg.min_transition = get_or<std::size_t>(obj, "min_transition", cfg.min_transition, where);
    cfg.max_transition = get_or<std::size_t>(obj, "max_transition", cfg.max_transition, where);
    cfg.noise = get_or<double>(obj, "noise", cfg.noise, where);
    cfg.order = word_order_from_string(
        get_or<std::string>(obj, "order", to_string(cfg.order), where));
    cfg.seed = get_or<std::uint64_t>(obj, "seed", cfg.seed, where);
    return cfg;
}

json synth_config_json(const SynthConfig& cfg) {
    return {
        {"glosses", cfg.glosses},
        {"feature_dim", cfg.feature_dim},
        {"samples", cfg.samples},
        {"min_glosses_per_sample", cfg.min_glosses_per_sample},
        {"max_glosses_per_sample", cfg.max_glosses_per_sample},
        {"min_segment", cfg.min_segment},
        {"max_segment", cfg.max_segment},
        {"min_transition", cfg.min_transition},
        {"max_transition", cfg.max_transition},
        {"noise", cfg.noise},
        {"order", to_string(cfg.order)},
        {"seed", cfg.seed},
    };
}

EncoderConfig encoder_config_from(const json& obj, const std::string& where) {
    check_keys(obj,
               {"layers", "hidden", "heads", "ffn", "window", "positions", "downsample",
                "downsample_after", "kernel", "stride"},
               where);
    EncoderConfig cfg;
    cfg.layers = get_or<std::size_t>(obj, "layers", cfg.layers, where);
    cfg.hidden = get_or<std::size_t>(obj, "hidden", cfg.hidden, where);
    cfg.heads = get_or<std::size_t>(obj, "heads", cfg.heads, where);
    cfg.ffn = get_or<std::size_t>(obj, "ffn", cfg.ffn, where);
    cfg.window = get_or<std::size_t>(obj, "window", cfg.window, where);
    cfg.positions = get_or<bool>(obj, "positions", cfg.positions, where);
    cfg.downsample = get_or<bool>(obj, "downsample", cfg.downsample, where);
    cfg.downsample_after =
        get_or<std::size_t>(obj, "downsample_after", cfg.downsample_after, where);
    cfg.kernel = get_or<std::size_t>(obj, "kernel", cfg.kernel, where);
    cfg.stride = get_or<std::size_t>(obj, "stride", cfg.stride, where);
    return cfg;
}

json encoder_config_json(const EncoderConfig& cfg) {
    return {
        {"layers", cfg.layers},
        {"hidden", cfg.hidden},
        {"heads", cfg.heads},
        {"ffn", cfg.ffn},
        {"window", cfg.window},
        {"positions", cfg.positions},
        {"downsample", cfg.downsample},
        {"downsample_after", cfg.downsample_after},
        {"kernel", cfg.kernel},
        {"stride", cfg.stride},
    };
}

TrainConfig train_config_from(const json& obj, const std::string& where) {
    check_keys(obj,
               {"lr", "weight_decay", "clip_norm", "epochs", "warmup_epochs", "batch",
                "label_smoothing", "frame_subsample_stride", "seed"},
               where);
    TrainConfig cfg;
    cfg.lr = get_or<double>(obj, "lr", cfg.lr, where);
    cfg.weight_decay = get_or<double>(obj, "weight_decay", cfg.weight_decay, where);
    cfg.clip_norm = get_or<double>(obj, "clip_norm", cfg.clip_norm, where);
    cfg.epochs = get_or<std::size_t>(obj, "epochs", cfg.epochs, where);
    cfg.warmup_epochs = get_or<std::size_t>(obj, "warmup_epochs", cfg.warmup_epochs, where);
    cfg.batch = get_or<std::size_t>(obj, "batch", cfg.batch, where);
    cfg.label_smoothing = get_or<double>(obj, "label_smoothing", cfg.label_smoothing, where);
    cfg.frame_subsample_stride =
        get_or<std::size_t>(obj, "frame_subsample_stride", cfg.frame_subsample_stride, where);
    cfg.seed = get_or<std::uint64_t>(obj, "seed", cfg.seed, where);
    return cfg;
}

json train_config_json(const TrainConfig& cfg) {
    return {
        {"lr", cfg.lr},
        {"weight_decay", cfg.weight_decay},
        {"clip_norm", cfg.clip_norm},
        {"epochs", cfg.epochs},
        {"warmup_epochs", cfg.warmup_epochs},
        {"batch", cfg.batch},
        {"label_smoothing", cfg.label_smoothing},
        {"frame_subsample_stride", cfg.frame_subsample_stride},
        {"seed", cfg.seed},
    };
}

DecoderConfig decoder_config_from(const json& obj, const std::string& where) {
    check_keys(obj, {"d_model", "layers", "heads", "ffn", "lora_rank", "lora_alpha"}, where);
    DecoderConfig cfg;
    cfg.d_model = get_or<std::size_t>(obj, "d_model", cfg.d_model, where);
    cfg.layers = get_or<std::size_t>(obj, "layers", cfg.layers, where);
    cfg.heads = get_or<std::size_t>(obj, "heads", cfg.heads, where);
    cfg.ffn = get_or<std::size_t>(obj, "ffn", cfg.ffn, where);
    cfg.lora_rank = get_or<int>(obj, "lora_rank", cfg.lora_rank, where);
    cfg.lora_alpha = get_or<double>(obj, "lora_alpha", cfg.lora_alpha, where);
    return cfg;
}

json decoder_config_json(const DecoderConfig& cfg) {
    return {
        {"d_model", cfg.d_model}, {"layers", cfg.layers},       {"heads", cfg.heads},
        {"ffn", cfg.ffn},         {"lora_rank", cfg.lora_rank}, {"lora_alpha", cfg.lora_alpha},
    };
}

std::pair<SynthDataset, SynthDataset> split_dataset(const SynthDataset& data,
                                                    double eval_fraction) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw ConfigError("eval_fraction must lie in (0, 1)");
    }
    std::size_t n = data.samples.size();
    auto n_eval = static_cast<std::size_t>(eval_fraction * static_cast<double>(n));
    if (n_eval == 0) n_eval = 1;
    if (n_eval >= n) throw ConfigError("dataset too small to hold out an eval split");
    return {slice_dataset(data, 0, n - n_eval), slice_dataset(data, n - n_eval, n)};
}

EmbeddingTable dataset_embeddings(const SynthDataset& data) {
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

json report_json(const EvalReport& report) {
    return {
        {"sentences", report.corpus_size}, {"bleu1", report.bleu1},
        {"bleu2", report.bleu2},           {"bleu3", report.bleu3},
        {"bleu4", report.bleu4},           {"rouge_l", report.rouge_l},
    };
}

ParamReport report_from_checkpoint(const Checkpoint& ckpt) {
    ParamReport report;
    for (const auto& entry : ckpt.params) {
        std::string top = ".";
        if (auto dot = entry.name.find('.'); dot != std::string::npos) {
            top = entry.name.substr(0, dot);
        }
        auto it = std::find_if(report.components.begin(), report.components.end(),
                               [&](const auto& c) { return c.first == top; });
        if (it == report.components.end()) {
            report.components.push_back({top, {}});
            it = std::prev(report.components.end());
        }
        std::size_t n = entry.value.numel();
        it->second.total += n;
        report.overall.total += n;
        if (entry.trainable) {
            it->second.trainable += n;
            report.overall.trainable += n;
        }
    }
    return report;
}

struct CommonArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string ckpt;
    std::string corpus;
    std::string hyps;
    std::string refs;
    std::string sample;
    std::uint64_t seed = 0;
    double threshold = 0.2;
    std::size_t beam_width = 4;
    bool frozen_features = false;
};

int run_synth(const CommonArgs& args, bool seed_given) {
    json raw = read_json(args.config, "config file");
    SynthConfig cfg = synth_config_from(raw, "synth config");
    if (seed_given) cfg.seed = args.seed;

    SynthDataset data = generate(cfg);
    ensure_dir(args.out);
    export_dataset(data, args.out);

    json resolved = synth_config_json(cfg);
    write_manifest(args.out, "synth", resolved, cfg.seed, {{"config", args.config}},
                   {"corpus.jsonl", "spans.jsonl", "embeddings.txt", "glosses.txt",
                    "manifest.json", "features/"});
    std::cout << "wrote " << data.samples.size() << " samples to " << args.out << "\n";
    return 0;
}

int run_extract(const CommonArgs& args) {
    std::vector<TaggedSentence> corpus = load_tagged_corpus(args.corpus);
    GlossVocab vocab = GlossVocab::build(corpus);

    fs::path out_file = args.out;
    if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
    vocab.save(out_file);

    fs::path manifest_dir =
        out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
    json resolved = {{"corpus", args.corpus}, {"out", args.out}};
    write_manifest(manifest_dir, "extract", resolved, 0, {{"corpus", args.corpus}},
                   {out_file.filename().string()});
    std::cout << "sentences " << corpus.size() << "\n";
    std::cout << "glosses " << vocab.size() << "\n";
    std::cout << "wrote " << out_file.string() << "\n";
    return 0;
}

int run_pretrain(const CommonArgs& args, bool seed_given) {
    json raw = read_json(args.config, "config file");
    check_keys(raw, {"encoder", "train", "threshold", "trainable_prototypes", "eval_fraction"},
               "pretrain config");
    PretrainOptions opts;
    opts.encoder = encoder_config_from(raw.value("encoder", json::object()), "encoder");
    opts.train = train_config_from(raw.value("train", json::object()), "train");
    opts.threshold = get_or<double>(raw, "threshold", opts.threshold, "pretrain config");
    opts.trainable_prototypes = get_or<bool>(raw, "trainable_prototypes",
                                             opts.trainable_prototypes, "pretrain config");
    double eval_fraction = get_or<double>(raw, "eval_fraction", 0.2, "pretrain config");
    if (seed_given) opts.train.seed = args.seed;

    SynthDataset data = load_dataset(args.data);
    auto [train_set, eval_set] = split_dataset(data, eval_fraction);
    PretrainRun run = pretrain(train_set, eval_set, opts);

    ensure_dir(args.out);
    fs::path out(args.out);
    run.checkpoint.save(out / "pretrain.s2gc");
    run.vocab.save(out / "glosses.txt");
    save_training_log(out / "log.jsonl", run.log);

    json resolved = {{"encoder", encoder_config_json(opts.encoder)},
                     {"train", train_config_json(opts.train)},
                     {"threshold", opts.threshold},
                     {"trainable_prototypes", opts.trainable_prototypes},
                     {"eval_fraction", eval_fraction}};
    write_text(out / "pretrain_config.json", resolved.dump(2) + "\n");
    write_manifest(out, "pretrain", resolved, opts.train.seed,
                   {{"config", args.config}, {"data", args.data}},
                   {"pretrain.s2gc", "glosses.txt", "log.jsonl", "pretrain_config.json"});

    std::cout << "train loss " << run.train_losses.back() << "\n";
    std::cout << "eval f1 " << run.eval_f1.back() << "\n";
    std::cout << "wrote " << (out / "pretrain.s2gc").string() << "\n";
    return 0;
}

int run_train(const CommonArgs& args, bool seed_given) {
    json raw = read_json(args.config, "config file");
    check_keys(raw,
               {"encoder", "decoder", "train", "lm_epochs", "expand_sigma", "eval_fraction",
                "max_len"},
               "train config");
    TranslationOptions opts;
    opts.encoder = encoder_config_from(raw.value("encoder", json::object()), "encoder");
    opts.decoder = decoder_config_from(raw.value("decoder", json::object()), "decoder");
    opts.train = train_config_from(raw.value("train", json::object()), "train");
    opts.lm_epochs = get_or<std::size_t>(raw, "lm_epochs", opts.lm_epochs, "train config");
    opts.expand_sigma = get_or<double>(raw, "expand_sigma", opts.expand_sigma, "train config");
    opts.frozen_features = args.frozen_features;
    double eval_fraction = get_or<double>(raw, "eval_fraction", 0.2, "train config");
    auto max_len = get_or<std::size_t>(raw, "max_len", 32, "train config");
    if (seed_given) opts.train.seed = args.seed;

    Checkpoint encoder_init;
    if (!args.ckpt.empty()) {
        encoder_init = Checkpoint::load(args.ckpt);
        opts.encoder_init = &encoder_init;
    }

    SynthDataset data = load_dataset(args.data);
    auto [train_set, eval_set] = split_dataset(data, eval_fraction);
    TranslationRun run = train_translation(train_set, eval_set, opts);

    std::vector<std::string> hyps;
    EvalReport report =
        translate_corpus(*run.model, eval_set, run.tokenizer,
                         opts.train.frame_subsample_stride, args.beam_width, max_len, &hyps);

    ensure_dir(args.out);
    fs::path out(args.out);
    run.checkpoint.save(out / "model.s2gc");
    run.tokenizer.save(out / "tokens.txt");
    save_training_log(out / "log.jsonl", run.log);
    std::string hyp_text, ref_text;
    for (const auto& h : hyps) hyp_text += h + "\n";
    for (const auto& sample : eval_set.samples) {
        ref_text += surface_text(sample.sentence) + "\n";
    }
    write_text(out / "hyps.txt", hyp_text);
    write_text(out / "refs.txt", ref_text);
    write_text(out / "report.json", report_json(report).dump(2) + "\n");

    json resolved = {{"encoder", encoder_config_json(opts.encoder)},
                     {"decoder", decoder_config_json(opts.decoder)},
                     {"train", train_config_json(opts.train)},
                     {"lm_epochs", opts.lm_epochs},
                     {"expand_sigma", opts.expand_sigma},
                     {"eval_fraction", eval_fraction},
                     {"max_len", max_len},
                     {"frozen_features", opts.frozen_features},
                     {"beam_width", args.beam_width}};
    write_text(out / "train_config.json", resolved.dump(2) + "\n");
    json inputs = {{"config", args.config}, {"data", args.data}};
    if (!args.ckpt.empty()) inputs["ckpt"] = args.ckpt;
    write_manifest(out, "train", resolved, opts.train.seed, inputs,
                   {"model.s2gc", "tokens.txt", "log.jsonl", "hyps.txt", "refs.txt",
                    "report.json", "train_config.json"});

    std::cout << "expanded " << run.expanded << "\n";
    std::cout << format_param_report(run.params);
    std::cout << format_eval_report(report);
    return 0;
}

int run_evaluate(const CommonArgs& args) {
    std::vector<std::string> hyps = read_lines(args.hyps, "hypothesis file");
    std::vector<std::string> refs = read_lines(args.refs, "reference file");
    EvalReport report = evaluate_corpus(hyps, refs);
    std::cout << format_eval_report(report);

    if (!args.out.empty()) {
        ensure_dir(args.out);
        fs::path out(args.out);
        write_text(out / "report.json", report_json(report).dump(2) + "\n");
        json resolved = {{"hyps", args.hyps}, {"refs", args.refs}};
        write_manifest(out, "evaluate", resolved, 0, resolved, {"report.json"});
    }
    return 0;
}

int run_spot(const CommonArgs& args) {
    if (!(args.threshold > 0.0 && args.threshold < 1.0)) {
        throw ConfigError("threshold must lie in (0, 1)");
    }

    Checkpoint ckpt = Checkpoint::load(args.ckpt);
    if (ckpt.stage != "pretrain") {
        throw ConfigError("spot needs a pretrain checkpoint, got stage '" + ckpt.stage + "'");
    }
    fs::path side = fs::path(args.ckpt).parent_path();
    json raw = read_json(side / "pretrain_config.json", "pretrain sidecar config");
    EncoderConfig enc = encoder_config_from(raw.value("encoder", json::object()), "encoder");
    TrainConfig train = train_config_from(raw.value("train", json::object()), "train");
    bool trainable_prototypes = raw.value("trainable_prototypes", false);
    GlossVocab vocab = GlossVocab::load(side / "glosses.txt");

    SynthDataset data = load_dataset(args.data);
    const SynthSample* sample = nullptr;
    for (const auto& s : data.samples) {
        if (s.id == args.sample) {
            sample = &s;
            break;
        }
    }
    if (!sample) throw ConfigError("unknown sample id '" + args.sample + "'");

    Rng rng(0);
    PretrainModel model(enc, data.config.feature_dim, vocab, dataset_embeddings(data),
                        trainable_prototypes, rng);
    ckpt.load_into(model);

    Tensor sub = subsample_frames(sample->features, train.frame_subsample_stride);
    PresenceMaps maps = model.presence_for(sub);
    const Tensor& joint = maps.joint->value;

    ensure_dir(args.out);
    fs::path out(args.out);
    save_features(out / "heatmap.s2gf", joint);
    std::vector<Span> spans = localize(joint, args.threshold);
    std::string listing;
    for (const auto& span : spans) {
        listing += vocab.glosses()[span.prototype] + "\t" + std::to_string(span.start) + "\t" +
                   std::to_string(span.end) + "\n";
    }
    write_text(out / "spans.txt", listing);

    json resolved = {{"ckpt", args.ckpt},
                     {"data", args.data},
                     {"sample", args.sample},
                     {"threshold", args.threshold}};
    write_manifest(out, "spot", resolved, 0, resolved, {"heatmap.s2gf", "spans.txt"});
    std::cout << "frames " << joint.rows() << "\n";
    std::cout << "spans " << spans.size() << "\n";
    std::cout << "wrote " << (out / "heatmap.s2gf").string() << "\n";
    return 0;
}

int run_params(const CommonArgs& args) {
    Checkpoint ckpt = Checkpoint::load(args.ckpt);
    ParamReport report = report_from_checkpoint(ckpt);
    std::cout << "stage " << ckpt.stage << ", optimizer steps " << ckpt.optimizer_steps
              << "\n";
    std::cout << format_param_report(report);

    if (!args.out.empty()) {
        ensure_dir(args.out);
        json resolved = {{"ckpt", args.ckpt}};
        write_manifest(args.out, "params", resolved, 0, resolved, {});
    }
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"sign language translation toolkit"};
    app.require_subcommand(1);
    CommonArgs args;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", args.config, "synth config (json)")->required();
    synth->add_option("--out", args.out, "output directory")->required();
    auto* synth_seed = synth->add_option("--seed", args.seed, "override the config seed");

    auto* extract = app.add_subcommand("extract", "extract a pseudo-gloss vocabulary");
    extract->add_option("--corpus", args.corpus, "tagged corpus (jsonl)")->required();
    extract->add_option("--out", args.out, "vocabulary file to write")->required();

    auto* pretrain = app.add_subcommand("pretrain", "presence pretraining");
    pretrain->add_option("--config", args.config, "pretrain config (json)")->required();
    pretrain->add_option("--data", args.data, "dataset directory")->required();
    pretrain->add_option("--out", args.out, "output directory")->required();
    auto* pre_seed = pretrain->add_option("--seed", args.seed, "override the config seed");

    auto* train = app.add_subcommand("train", "translation training");
    train->add_option("--config", args.config, "train config (json)")->required();
    train->add_option("--data", args.data, "dataset directory")->required();
    train->add_option("--out", args.out, "output directory")->required();
    train->add_option("--ckpt", args.ckpt, "pretrain checkpoint for encoder init");
    train->add_option("--beam-width", args.beam_width, "beam width for the final report");
    train->add_flag("--frozen-features", args.frozen_features,
                    "freeze the sign encoder and fc_m");
    auto* train_seed = train->add_option("--seed", args.seed, "override the config seed");

    auto* evaluate = app.add_subcommand("evaluate", "score hypotheses against references");
    evaluate->add_option("--hyps", args.hyps, "hypothesis corpus, one per line")->required();
    evaluate->add_option("--refs", args.refs, "reference corpus, one per line")->required();
    evaluate->add_option("--out", args.out, "optional report directory");

    auto* spot = app.add_subcommand("spot", "export a presence heatmap and spans");
    spot->add_option("--ckpt", args.ckpt, "pretrain checkpoint")->required();
    spot->add_option("--data", args.data, "dataset directory")->required();
    spot->add_option("--sample", args.sample, "sample id")->required();
    spot->add_option("--threshold", args.threshold, "presence threshold in (0, 1)");
    spot->add_option("--out", args.out, "output directory")->required();

    auto* params = app.add_subcommand("params", "parameter accounting for a checkpoint");
    params->add_option("--ckpt", args.ckpt, "checkpoint file")->required();
    params->add_option("--out", args.out, "optional manifest directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return run_synth(args, synth_seed->count() > 0);
        if (extract->parsed()) return run_extract(args);
        if (pretrain->parsed()) return run_pretrain(args, pre_seed->count() > 0);
        if (train->parsed()) return run_train(args, train_seed->count() > 0);
        if (evaluate->parsed()) return run_evaluate(args);
        if (spot->parsed()) return run_spot(args);
        if (params->parsed()) return run_params(args);
        throw UsageError("unreachable subcommand dispatch");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const VocabularyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace slt::cli
