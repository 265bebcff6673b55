#include "slt/spatial.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace slt {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts are unsupported");

void SpatialConfig::validate() const {
    if (image == 0 || patch == 0 || channels == 0) {
        throw ConfigError("spatial: zero-sized geometry");
    }
    if (image % patch != 0) {
        throw ConfigError("spatial: image " + std::to_string(image) +
                          " not divisible by patch " + std::to_string(patch));
    }
    if (width == 0 || depth == 0 || heads == 0 || ffn == 0 || feature_dim == 0) {
        throw ConfigError("spatial: zero-sized backbone dimension");
    }
    if (width % heads != 0) {
        throw ConfigError("spatial: width not divisible by heads");
    }
    if (adapted_layers > depth) {
        throw ConfigError("spatial: adapted_layers " + std::to_string(adapted_layers) +
                          " exceeds depth " + std::to_string(depth));
    }
    if (bn_momentum <= 0.0 || bn_momentum >= 1.0) {
        throw ConfigError("spatial: bn_momentum must lie in (0, 1)");
    }
}

BatchNorm1d::BatchNorm1d(std::size_t width, double momentum, double eps)
    : width_(width), momentum_(momentum), eps_(eps) {
    if (width == 0) throw ConfigError("BatchNorm1d: zero width");
    gain_ = Parameter(Tensor::full({width}, 1.0));
    bias_ = Parameter(Tensor::zeros({width}));
    running_mean_ = Parameter(Tensor::zeros({width}), false);
    running_var_ = Parameter(Tensor::full({width}, 1.0), false);
    register_parameter("gain", gain_);
    register_parameter("bias", bias_);
    register_parameter("running_mean", running_mean_);
    register_parameter("running_var", running_var_);
}

Var BatchNorm1d::forward(const Var& x) {
    require_rank(x->value, 2, "BatchNorm1d::forward");
    if (x->value.cols() != width_) {
        throw DimensionError("BatchNorm1d: input " + x->value.shape_string() +
                             " does not match width " + std::to_string(width_));
    }
    if (x->value.rows() == 0) throw DimensionError("BatchNorm1d: empty batch");

    if (training_) {
        Var mu = mean_rows(x);
        Var centered = add_rowvec(x, neg(mu));
        Var var = mean_rows(square(centered));
        Var xhat = div_rowvec(centered, sqrt_shift(var, eps_));
        for (std::size_t j = 0; j < width_; ++j) {
            running_mean_.value[j] =
                (1.0 - momentum_) * running_mean_.value[j] + momentum_ * mu->value[j];
            running_var_.value[j] =
                (1.0 - momentum_) * running_var_.value[j] + momentum_ * var->value[j];
        }
        return add_rowvec(mul_rowvec(xhat, leaf(gain_)), leaf(bias_));
    }

    Tensor denom({width_});
    for (std::size_t j = 0; j < width_; ++j)
        denom[j] = std::sqrt(running_var_.value[j] + eps_);
    Var centered = add_rowvec(x, neg(constant(running_mean_.value)));
    Var xhat = div_rowvec(centered, constant(denom));
    return add_rowvec(mul_rowvec(xhat, leaf(gain_)), leaf(bias_));
}

VisionLayer::VisionLayer(std::size_t width, std::size_t heads, std::size_t ffn, Rng& rng)
    : heads_(heads),
      ln1_(width),
      ln2_(width),
      q_(width, width, true, rng),
      k_(width, width, true, rng),
      v_(width, width, true, rng),
      o_(width, width, true, rng),
      mlp_in_(width, ffn, true, rng),
      mlp_out_(ffn, width, true, rng) {
    register_module("ln1", ln1_);
    register_module("ln2", ln2_);
    register_module("q", q_);
    register_module("k", k_);
    register_module("v", v_);
    register_module("o", o_);
    register_module("mlp_in", mlp_in_);
    register_module("mlp_out", mlp_out_);
}

Var VisionLayer::forward(const Var& x) {
    Var n1 = ln1_.forward(x);
    Var attn = o_.forward(
        attention_core(q_.forward(n1), k_.forward(n1), v_.forward(n1), heads_, nullptr,
                       nullptr));
    Var h = add(x, attn);
    Var n2 = ln2_.forward(h);
    return add(h, mlp_out_.forward(gelu(mlp_in_.forward(n2))));
}

VisionBackbone::VisionBackbone(const SpatialConfig& cfg, Rng& rng)
    : cfg_(cfg),
      patch_embed_(cfg.patch_len(), cfg.width, true, rng),
      final_ln_(cfg.width) {
    Tensor cls({1, cfg.width});
    for (std::size_t i = 0; i < cls.numel(); ++i) cls[i] = rng.gaussian(0.0, 0.02);
    cls_token_ = Parameter(std::move(cls));
    Tensor pos({cfg.patches() + 1, cfg.width});
    for (std::size_t i = 0; i < pos.numel(); ++i) pos[i] = rng.gaussian(0.0, 0.02);
    positions_ = Parameter(std::move(pos));

    register_module("patch_embed", patch_embed_);
    register_parameter("cls_token", cls_token_);
    register_parameter("positions", positions_);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        layers_.push_back(std::make_unique<VisionLayer>(cfg.width, cfg.heads, cfg.ffn, rng));
        register_module("layers." + std::to_string(i), *layers_.back());
    }
    register_module("final_ln", final_ln_);
}

Var VisionBackbone::forward_frame(const Var& patches) {
    Var tokens = concat_rows({leaf(cls_token_), patch_embed_.forward(patches)});
    Var x = add(tokens, leaf(positions_));
    for (auto& layer : layers_) x = layer->forward(x);
    return slice_rows(final_ln_.forward(x), 0, 1);
}

namespace {

SpatialConfig checked(SpatialConfig cfg) {
    cfg.validate();
    return cfg;
}

} // namespace

SpatialModel::SpatialModel(SpatialConfig cfg, Rng& rng)
    : cfg_(checked(std::move(cfg))),
      backbone_(cfg_, rng),
      readout_(cfg_.width, cfg_.feature_dim, true, rng),
      norm_(cfg_.feature_dim, cfg_.bn_momentum) {
    register_module("backbone", backbone_);
    register_module("readout", readout_);
    register_module("norm", norm_);
    backbone_.set_trainable(false);
}

void SpatialModel::adapt(Rng& rng) {
    if (adapted_) throw ConfigError("spatial: adapters already attached");
    std::vector<std::string> targets = {"q", "k", "v", "o", "mlp_in", "mlp_out"};
    for (std::size_t i = backbone_.depth() - cfg_.adapted_layers; i < backbone_.depth(); ++i) {
        inject_adapters(backbone_.layer(i), targets, cfg_.lora_rank, cfg_.lora_alpha, rng);
    }
    adapted_ = true;
}

Tensor SpatialModel::patchify(const Tensor& frames, std::size_t frame_index) const {
    std::size_t h = frames.dim(1), w = frames.dim(2);
    std::size_t ch = frames.ndim() == 4 ? frames.dim(3) : 1;
    std::size_t per_side = cfg_.image / cfg_.patch;
    Tensor out({cfg_.patches(), cfg_.patch_len()});
    const double* base = frames.data().data() + frame_index * h * w * ch;
    for (std::size_t py = 0; py < per_side; ++py) {
        for (std::size_t px = 0; px < per_side; ++px) {
            double* dst = out.data().data() + (py * per_side + px) * cfg_.patch_len();
            for (std::size_t y = 0; y < cfg_.patch; ++y) {
                for (std::size_t x = 0; x < cfg_.patch; ++x) {
                    for (std::size_t c = 0; c < ch; ++c) {
                        std::size_t src = ((py * cfg_.patch + y) * w + px * cfg_.patch + x) * ch + c;
                        *dst++ = base[src];
                    }
                }
            }
        }
    }
    return out;
}

Var SpatialModel::forward(const Tensor& frames) {
    if (frames.ndim() != 3 && frames.ndim() != 4) {
        throw DimensionError("spatial: frames must be (T x H x W[ x ch]), got " +
                             frames.shape_string());
    }
    std::size_t t = frames.dim(0);
    if (t == 0) throw DimensionError("spatial: empty frame sequence");
    if (frames.dim(1) != cfg_.image || frames.dim(2) != cfg_.image) {
        throw DimensionError("spatial: frame size " + frames.shape_string() +
                             " does not match configured image " + std::to_string(cfg_.image));
    }
    if ((frames.ndim() == 4 ? frames.dim(3) : 1) != cfg_.channels) {
        throw DimensionError("spatial: channel count mismatch");
    }

    std::vector<Var> per_frame;
    per_frame.reserve(t);
    for (std::size_t i = 0; i < t; ++i) {
        per_frame.push_back(backbone_.forward_frame(constant(patchify(frames, i))));
    }
    Var stacked = t == 1 ? per_frame[0] : concat_rows(per_frame);
    return norm_.forward(readout_.forward(stacked));
}

Tensor SpatialModel::extract(const Tensor& frames) {
    bool was = norm_.training();
    norm_.set_training(false);
    Tensor out = forward(frames)->value;
    norm_.set_training(was);
    return out;
}

// ---- feature file format ------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'S', '2', 'G', 'F'};
constexpr std::uint16_t kFeatureVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("feature file truncated: " + path.string());
    return value;
}

} // namespace

void save_features(const std::filesystem::path& path, const Tensor& features) {
    if (features.ndim() == 0 || features.numel() == 0) {
        throw DimensionError("save_features: empty tensor");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kFeatureMagic, 4);
    write_pod(out, kFeatureVersion);
    write_pod(out, static_cast<std::uint16_t>(features.ndim()));
    for (std::size_t d : features.shape()) write_pod(out, static_cast<std::uint32_t>(d));
    for (double x : features.data()) write_pod(out, static_cast<float>(x));
    if (!out) throw IoError("write failed: " + path.string());
}

Tensor load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
        throw FormatError("not a feature file: " + path.string());
    }
    auto version = read_pod<std::uint16_t>(in, path);
    if (version != kFeatureVersion) {
        throw FormatError("unsupported feature file version " + std::to_string(version) +
                          ": " + path.string());
    }
    auto rank = read_pod<std::uint16_t>(in, path);
    if (rank == 0 || rank > 4) {
        throw FormatError("implausible rank " + std::to_string(rank) + ": " + path.string());
    }
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
        d = read_pod<std::uint32_t>(in, path);
        if (d == 0) throw FormatError("zero dimension: " + path.string());
        numel *= d;
    }
    Tensor out(shape);
    for (std::size_t i = 0; i < numel; ++i)
        out[i] = static_cast<double>(read_pod<float>(in, path));
    char extra;
    in.read(&extra, 1);
    if (!in.eof()) throw FormatError("trailing bytes: " + path.string());
    return out;
}

} // namespace slt
