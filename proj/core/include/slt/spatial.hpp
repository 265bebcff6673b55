#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "slt/adapters.hpp"
#include "slt/encoder.hpp"

namespace slt {

struct SpatialConfig {
    std::size_t image = 16;          // square frame edge
    std::size_t patch = 4;
    std::size_t channels = 1;
    std::size_t width = 32;          // backbone width
    std::size_t depth = 4;
    std::size_t heads = 4;
    std::size_t ffn = 64;
    std::size_t feature_dim = 32;    // readout output C
    std::size_t adapted_layers = 3;  // top of the stack
    int lora_rank = 4;
    double lora_alpha = 4.0;
    double bn_momentum = 0.1;

    void validate() const;
    std::size_t patches() const { return (image / patch) * (image / patch); }
    std::size_t patch_len() const { return patch * patch * channels; }
};

// 1-D batch normalization over the feature axis with running statistics kept
// as frozen buffer parameters so they travel with checkpoints.
class BatchNorm1d : public Module {
public:
    explicit BatchNorm1d(std::size_t width, double momentum = 0.1, double eps = 1e-5);

    Var forward(const Var& x);  // (n x width)
    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    Parameter& running_mean() { return running_mean_; }
    Parameter& running_var() { return running_var_; }

private:
    std::size_t width_ = 0;
    double momentum_ = 0.1, eps_ = 1e-5;
    bool training_ = false;
    Parameter gain_, bias_;
    Parameter running_mean_, running_var_;  // frozen buffers
};

class VisionLayer : public Module {
public:
    VisionLayer(std::size_t width, std::size_t heads, std::size_t ffn, Rng& rng);

    Var forward(const Var& x);

private:
    std::size_t heads_;
    LayerNorm ln1_, ln2_;
    LoraLinear q_, k_, v_, o_, mlp_in_, mlp_out_;
};

// Tiny randomly initialized vision transformer, frozen at construction.
// The class token's final-layer output is the per-frame feature.
class VisionBackbone : public Module {
public:
    VisionBackbone(const SpatialConfig& cfg, Rng& rng);

    Var forward_frame(const Var& patches);  // (P x patch_len) -> (1 x width)
    VisionLayer& layer(std::size_t i) { return *layers_[i]; }
    std::size_t depth() const { return layers_.size(); }

private:
    SpatialConfig cfg_;
    Linear patch_embed_;
    Parameter cls_token_;   // (1 x width)
    Parameter positions_;   // (P+1 x width)
    std::vector<std::unique_ptr<VisionLayer>> layers_;
    LayerNorm final_ln_;
};

// Frozen backbone + trainable adapters, readout projection, and batch norm.
class SpatialModel : public Module {
public:
    SpatialModel(SpatialConfig cfg, Rng& rng);

    // Attaches adapters to the top cfg.adapted_layers blocks.
    void adapt(Rng& rng);
    bool adapted() const { return adapted_; }

    // frames: (T x H x W) or (T x H x W x ch) raw pixel tensor.
    Var forward(const Tensor& frames);
    Tensor extract(const Tensor& frames);  // eval-mode value path

    const SpatialConfig& config() const { return cfg_; }
    BatchNorm1d& norm() { return norm_; }

private:
    Tensor patchify(const Tensor& frames, std::size_t frame_index) const;

    SpatialConfig cfg_;
    VisionBackbone backbone_;
    Linear readout_;
    BatchNorm1d norm_;
    bool adapted_ = false;
};

// Binary feature container: magic "S2GF", version, rank, dims, then float32
// payload in row-major order. Doubles are narrowed on save.
void save_features(const std::filesystem::path& path, const Tensor& features);
Tensor load_features(const std::filesystem::path& path);

} // namespace slt
