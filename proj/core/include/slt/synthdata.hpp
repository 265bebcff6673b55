#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "slt/pgloss.hpp"
#include "slt/tensor.hpp"

namespace slt {

// Spoken-order permutation applied to the sign-order gloss list.
enum class WordOrder { identity, reverse, rotate, shuffle };

WordOrder word_order_from_string(const std::string& name);
std::string to_string(WordOrder order);

struct SynthConfig {
    std::size_t glosses = 20;       // vocabulary size G
    std::size_t feature_dim = 64;   // C
    std::size_t samples = 100;
    std::size_t min_glosses_per_sample = 2;
    std::size_t max_glosses_per_sample = 5;
    std::size_t min_segment = 4;    // frames per planted gloss
    std::size_t max_segment = 8;
    std::size_t min_transition = 1; // frames between adjacent glosses
    std::size_t max_transition = 3;
    double noise = 0.05;
    WordOrder order = WordOrder::identity;
    std::uint64_t seed = 7;

    void validate() const;
};

struct GoldSpan {
    std::string gloss;
    std::size_t start = 0;  // inclusive frame indices
    std::size_t end = 0;

    bool operator==(const GoldSpan&) const = default;
};

struct SynthSample {
    std::string id;
    Tensor features;  // (T* x C), values exactly representable as float
    TaggedSentence sentence;
    std::vector<std::string> gold_glosses;  // sign order
    std::vector<GoldSpan> spans;            // ascending, disjoint
};

struct SynthDataset {
    SynthConfig config;
    std::vector<std::string> gloss_names;  // size G
    Tensor signatures;                     // (G x C), unit rows
    std::vector<SynthSample> samples;
};

// German-flavored gloss lemmas; indices past the base list gain a numeric
// suffix so any vocabulary size stays collision-free.
std::vector<std::string> gloss_wordlist(std::size_t count);

SynthDataset generate(const SynthConfig& config);

// Pixel rendering for the spatial path: each frame becomes an image x image
// block tiling the frame's feature values, squashed into [0, 1].
Tensor render_pixels(const Tensor& features, std::size_t image);

// Writes corpus.jsonl, features/<id>.s2gf, spans.jsonl, embeddings.txt,
// glosses.txt, and manifest.json into an existing directory.
void export_dataset(const SynthDataset& dataset, const std::filesystem::path& dir);
SynthDataset load_dataset(const std::filesystem::path& dir);

// Span sidecar, one record per line: {"id":..., "spans":[{gloss,start,end}]}.
void save_spans(const std::filesystem::path& path, const std::vector<SynthSample>& samples);
std::vector<std::pair<std::string, std::vector<GoldSpan>>>
load_spans(const std::filesystem::path& path);

} // namespace slt
