#include "slt/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "slt/error.hpp"
#include "slt/spatial.hpp"

namespace slt {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 20> kBaseWords = {
    "regen", "sonne", "wind",  "berg",  "tal",    "haus",  "hund",
    "kind",  "tag",   "nacht", "jahr",  "wasser", "feuer", "luft",
    "erde",  "baum",  "vogel", "fisch", "stein",  "blume",
};

constexpr std::array<const char*, 4> kPosCycle = {"NOUN", "VERB", "ADJ", "ADV"};

double snap_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

std::string sample_id(std::size_t index) {
    std::ostringstream out;
    out << "sample_";
    out.width(6);
    out.fill('0');
    out << index;
    return out.str();
}

TagToken content_token(const std::string& lemma, std::size_t gloss_index) {
    TagToken tok;
    tok.lemma = lemma;
    tok.upos = kPosCycle[gloss_index % kPosCycle.size()];
    tok.surface = lemma;
    if (tok.upos == "NOUN" && !tok.surface.empty()) {
        tok.surface[0] = static_cast<char>(std::toupper(tok.surface[0]));
    }
    return tok;
}

TagToken filler_token(const std::string& surface, const std::string& upos) {
    return TagToken{surface, surface, upos};
}

} // namespace

WordOrder word_order_from_string(const std::string& name) {
    if (name == "identity") return WordOrder::identity;
    if (name == "reverse") return WordOrder::reverse;
    if (name == "rotate") return WordOrder::rotate;
    if (name == "shuffle") return WordOrder::shuffle;
    throw ConfigError("synth: unknown word order '" + name + "'");
}

std::string to_string(WordOrder order) {
    switch (order) {
        case WordOrder::identity: return "identity";
        case WordOrder::reverse: return "reverse";
        case WordOrder::rotate: return "rotate";
        case WordOrder::shuffle: return "shuffle";
    }
    throw ConfigError("synth: invalid word order value");
}

void SynthConfig::validate() const {
    if (glosses < 2) throw ConfigError("synth: need at least 2 glosses");
    if (feature_dim < 2) throw ConfigError("synth: feature_dim must be at least 2");
    if (samples == 0) throw ConfigError("synth: samples must be positive");
    if (min_glosses_per_sample < 1) {
        throw ConfigError("synth: min_glosses_per_sample must be at least 1");
    }
    if (max_glosses_per_sample < min_glosses_per_sample) {
        throw ConfigError("synth: gloss-per-sample range is empty");
    }
    if (max_glosses_per_sample > glosses) {
        throw ConfigError("synth: max_glosses_per_sample exceeds the vocabulary");
    }
    if (min_segment < 1) throw ConfigError("synth: segment length must be at least 1");
    if (max_segment < min_segment) throw ConfigError("synth: segment range is empty");
    if (max_transition < min_transition) throw ConfigError("synth: transition range is empty");
    // One separating frame keeps spans disjoint after stride-2 downsampling.
    if (max_glosses_per_sample >= 2 && min_transition < 1) {
        throw ConfigError("synth: multi-gloss samples need min_transition >= 1");
    }
    if (noise < 0.0) throw ConfigError("synth: noise must be non-negative");
}

std::vector<std::string> gloss_wordlist(std::size_t count) {
    std::vector<std::string> words;
    words.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string w = kBaseWords[i % kBaseWords.size()];
        if (i >= kBaseWords.size()) w += std::to_string(i / kBaseWords.size() + 1);
        words.push_back(std::move(w));
    }
    return words;
}

namespace {

Tensor make_signatures(std::size_t count, std::size_t dim, Rng& rng) {
    Tensor sig({count, dim});
    for (std::size_t g = 0; g < count; ++g) {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            double v = rng.gaussian();
            sig[g * dim + c] = v;
            norm2 += v * v;
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t c = 0; c < dim; ++c) {
            sig[g * dim + c] = snap_to_float(sig[g * dim + c] * inv);
        }
    }
    return sig;
}

std::vector<std::size_t> pick_glosses(std::size_t vocab, std::size_t count, Rng& rng) {
    std::vector<std::size_t> ids(vocab);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    rng.shuffle(ids);
    ids.resize(count);
    return ids;
}

std::vector<std::size_t> spoken_order(std::size_t count, WordOrder order, Rng& rng) {
    std::vector<std::size_t> pos(count);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    switch (order) {
        case WordOrder::identity: break;
        case WordOrder::reverse: std::reverse(pos.begin(), pos.end()); break;
        case WordOrder::rotate:
            if (count > 1) std::rotate(pos.begin(), pos.begin() + 1, pos.end());
            break;
        case WordOrder::shuffle: rng.shuffle(pos); break;
    }
    return pos;
}

SynthSample make_sample(const SynthConfig& cfg, const std::vector<std::string>& names,
                        const Tensor& signatures, std::size_t index, Rng rng) {
    SynthSample sample;
    sample.id = sample_id(index);

    std::size_t span_count =
        cfg.min_glosses_per_sample +
        rng.index(cfg.max_glosses_per_sample - cfg.min_glosses_per_sample + 1);
    std::vector<std::size_t> gloss_ids = pick_glosses(cfg.glosses, span_count, rng);

    std::vector<std::size_t> seg_len(span_count), gap_len(span_count ? span_count - 1 : 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < span_count; ++i) {
        seg_len[i] = cfg.min_segment + rng.index(cfg.max_segment - cfg.min_segment + 1);
        total += seg_len[i];
    }
    for (std::size_t i = 0; i + 1 < span_count; ++i) {
        gap_len[i] = cfg.min_transition + rng.index(cfg.max_transition - cfg.min_transition + 1);
        total += gap_len[i];
    }

    std::size_t dim = cfg.feature_dim;
    sample.features = Tensor({total, dim});
    std::size_t frame = 0;
    for (std::size_t i = 0; i < span_count; ++i) {
        std::size_t g = gloss_ids[i];
        sample.spans.push_back({names[g], frame, frame + seg_len[i] - 1});
        sample.gold_glosses.push_back(names[g]);
        for (std::size_t f = 0; f < seg_len[i]; ++f, ++frame) {
            for (std::size_t c = 0; c < dim; ++c) {
                double v = signatures[g * dim + c] + cfg.noise * rng.gaussian();
                sample.features[frame * dim + c] = snap_to_float(v);
            }
        }
        if (i + 1 < span_count) {
            for (std::size_t f = 0; f < gap_len[i]; ++f, ++frame) {
                for (std::size_t c = 0; c < dim; ++c) {
                    sample.features[frame * dim + c] = snap_to_float(cfg.noise * rng.gaussian());
                }
            }
        }
    }

    std::vector<std::size_t> speak = spoken_order(span_count, cfg.order, rng);
    sample.sentence.id = sample.id;
    sample.sentence.tokens.push_back(filler_token("die", "DET"));
    for (std::size_t i = 0; i < speak.size(); ++i) {
        if (i > 0) sample.sentence.tokens.push_back(filler_token("und", "CCONJ"));
        std::size_t g = gloss_ids[speak[i]];
        sample.sentence.tokens.push_back(content_token(names[g], g));
    }
    sample.sentence.tokens.push_back(filler_token(".", "PUNCT"));

    std::string text;
    for (const TagToken& tok : sample.sentence.tokens) {
        if (!text.empty() && tok.upos != "PUNCT") text += " ";
        text += tok.surface;
    }
    sample.sentence.sentence = text;
    return sample;
}

} // namespace

SynthDataset generate(const SynthConfig& config) {
    config.validate();
    SynthDataset data;
    data.config = config;
    data.gloss_names = gloss_wordlist(config.glosses);

    Rng root(config.seed);
    Rng sig_rng = root.fork(0);
    data.signatures = make_signatures(config.glosses, config.feature_dim, sig_rng);

    data.samples.reserve(config.samples);
    for (std::size_t i = 0; i < config.samples; ++i) {
        data.samples.push_back(
            make_sample(config, data.gloss_names, data.signatures, i, root.fork(i + 1)));
    }
    return data;
}

Tensor render_pixels(const Tensor& features, std::size_t image) {
    require_rank(features, 2, "render_pixels");
    if (image == 0) throw ConfigError("render_pixels: image size must be positive");
    std::size_t t = features.rows(), dim = features.cols();
    Tensor frames({t, image, image});
    for (std::size_t f = 0; f < t; ++f) {
        for (std::size_t p = 0; p < image * image; ++p) {
            double v = features[f * dim + p % dim];
            frames[f * image * image + p] = 0.5 + 0.5 * std::tanh(v);
        }
    }
    return frames;
}

void save_spans(const std::filesystem::path& path, const std::vector<SynthSample>& samples) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const SynthSample& sample : samples) {
        json record;
        record["id"] = sample.id;
        json spans = json::array();
        for (const GoldSpan& span : sample.spans) {
            spans.push_back({{"gloss", span.gloss}, {"start", span.start}, {"end", span.end}});
        }
        record["spans"] = spans;
        out << record.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::pair<std::string, std::vector<GoldSpan>>>
load_spans(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<std::pair<std::string, std::vector<GoldSpan>>> result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json record = json::parse(line);
            std::vector<GoldSpan> spans;
            for (const json& s : record.at("spans")) {
                GoldSpan span;
                span.gloss = s.at("gloss").get<std::string>();
                span.start = s.at("start").get<std::size_t>();
                span.end = s.at("end").get<std::size_t>();
                if (span.end < span.start) {
                    throw FormatError("span ends before it starts");
                }
                spans.push_back(std::move(span));
            }
            result.emplace_back(record.at("id").get<std::string>(), std::move(spans));
        } catch (const json::exception& e) {
            throw FormatError("span sidecar line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return result;
}

void export_dataset(const SynthDataset& dataset, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw IoError("export: directory does not exist: " + dir.string());
    }
    fs::create_directory(dir / "features");

    std::vector<TaggedSentence> corpus;
    corpus.reserve(dataset.samples.size());
    for (const SynthSample& sample : dataset.samples) corpus.push_back(sample.sentence);
    save_tagged_corpus(dir / "corpus.jsonl", corpus);

    for (const SynthSample& sample : dataset.samples) {
        save_features(dir / "features" / (sample.id + ".s2gf"), sample.features);
    }
    save_spans(dir / "spans.jsonl", dataset.samples);

    EmbeddingTable table;
    table.dim = dataset.config.feature_dim;
    table.tokens = dataset.gloss_names;
    for (std::size_t g = 0; g < dataset.gloss_names.size(); ++g) {
        std::vector<double> row(table.dim);
        for (std::size_t c = 0; c < table.dim; ++c) {
            row[c] = dataset.signatures[g * table.dim + c];
        }
        table.vectors.push_back(std::move(row));
    }
    table.save(dir / "embeddings.txt");

    GlossVocab::from_glosses(dataset.gloss_names).save(dir / "glosses.txt");

    const SynthConfig& cfg = dataset.config;
    json manifest;
    manifest["glosses"] = cfg.glosses;
    manifest["feature_dim"] = cfg.feature_dim;
    manifest["samples"] = cfg.samples;
    manifest["min_glosses_per_sample"] = cfg.min_glosses_per_sample;
    manifest["max_glosses_per_sample"] = cfg.max_glosses_per_sample;
    manifest["min_segment"] = cfg.min_segment;
    manifest["max_segment"] = cfg.max_segment;
    manifest["min_transition"] = cfg.min_transition;
    manifest["max_transition"] = cfg.max_transition;
    manifest["noise"] = cfg.noise;
    manifest["order"] = to_string(cfg.order);
    manifest["seed"] = cfg.seed;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot open for writing: " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + (dir / "manifest.json").string());
}

SynthDataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open: " + (dir / "manifest.json").string());

    SynthDataset data;
    try {
        json manifest = json::parse(in);
        SynthConfig& cfg = data.config;
        cfg.glosses = manifest.at("glosses").get<std::size_t>();
        cfg.feature_dim = manifest.at("feature_dim").get<std::size_t>();
        cfg.samples = manifest.at("samples").get<std::size_t>();
        cfg.min_glosses_per_sample = manifest.at("min_glosses_per_sample").get<std::size_t>();
        cfg.max_glosses_per_sample = manifest.at("max_glosses_per_sample").get<std::size_t>();
        cfg.min_segment = manifest.at("min_segment").get<std::size_t>();
        cfg.max_segment = manifest.at("max_segment").get<std::size_t>();
        cfg.min_transition = manifest.at("min_transition").get<std::size_t>();
        cfg.max_transition = manifest.at("max_transition").get<std::size_t>();
        cfg.noise = manifest.at("noise").get<double>();
        cfg.order = word_order_from_string(manifest.at("order").get<std::string>());
        cfg.seed = manifest.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw FormatError("manifest: " + std::string(e.what()));
    }

    EmbeddingTable table = EmbeddingTable::load(dir / "embeddings.txt");
    if (table.tokens.size() != data.config.glosses || table.dim != data.config.feature_dim) {
        throw FormatError("embeddings do not match the manifest: " + dir.string());
    }
    data.gloss_names = table.tokens;
    data.signatures = Tensor({table.tokens.size(), table.dim});
    for (std::size_t g = 0; g < table.tokens.size(); ++g) {
        for (std::size_t c = 0; c < table.dim; ++c) {
            data.signatures[g * table.dim + c] = table.vectors[g][c];
        }
    }

    std::vector<TaggedSentence> corpus = load_tagged_corpus(dir / "corpus.jsonl");
    auto spans = load_spans(dir / "spans.jsonl");
    if (corpus.size() != spans.size()) {
        throw FormatError("corpus and span sidecar disagree on sample count: " + dir.string());
    }

    data.samples.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].id != spans[i].first) {
            throw FormatError("sample order mismatch at record " + std::to_string(i) + ": " +
                              corpus[i].id + " vs " + spans[i].first);
        }
        SynthSample sample;
        sample.id = corpus[i].id;
        sample.sentence = corpus[i];
        sample.features = load_features(dir / "features" / (sample.id + ".s2gf"));
        sample.spans = spans[i].second;
        for (const GoldSpan& span : sample.spans) sample.gold_glosses.push_back(span.gloss);
        data.samples.push_back(std::move(sample));
    }
    return data;
}

} // namespace slt
