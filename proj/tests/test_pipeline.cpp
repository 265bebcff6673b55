#include "doctest.h"

#include "slt/autodiff.hpp"
#include "slt/error.hpp"
#include "slt/pipeline.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("slt_pl_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Probe : slt::Module {
    slt::Parameter w, b;
    Probe()
        : w(slt::Tensor({2, 2})), b(slt::Tensor({2})) {
        register_parameter("w", w);
        register_parameter("b", b);
    }
};

slt::TrainConfig quick_train(std::size_t epochs, std::size_t warmup, std::size_t batch,
                             double lr, std::uint64_t seed) {
    slt::TrainConfig cfg;
    cfg.lr = lr;
    cfg.epochs = epochs;
    cfg.warmup_epochs = warmup;
    cfg.batch = batch;
    cfg.seed = seed;
    return cfg;
}

slt::EncoderConfig tiny_encoder() {
    slt::EncoderConfig enc;
    enc.layers = 2;
    enc.hidden = 32;
    enc.heads = 4;
    enc.ffn = 64;
    enc.window = 5;
    enc.downsample_after = 1;
    return enc;
}

slt::SynthDataset separable_data(std::size_t samples, std::uint64_t seed) {
    slt::SynthConfig sc;
    sc.glosses = 6;
    sc.feature_dim = 16;
    sc.samples = samples;
    sc.min_glosses_per_sample = 1;
    sc.max_glosses_per_sample = 3;
    sc.min_segment = 4;
    sc.max_segment = 7;
    sc.min_transition = 1;
    sc.max_transition = 2;
    sc.noise = 0.02;
    sc.seed = seed;
    return slt::generate(sc);
}

// Row log-softmax computed independently of the autodiff stack.
std::vector<double> oracle_log_softmax(const std::vector<double>& row) {
    double hi = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - hi);
    double logz = hi + std::log(z);
    std::vector<double> out;
    for (double x : row) out.push_back(x - logz);
    return out;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("train config validation") {
    slt::TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    cfg = slt::TrainConfig();
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);

    cfg = slt::TrainConfig();
    cfg.warmup_epochs = cfg.epochs;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);

    cfg = slt::TrainConfig();
    cfg.label_smoothing = 1.0;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);

    cfg = slt::TrainConfig();
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);

    cfg = slt::TrainConfig();
    cfg.frame_subsample_stride = 0;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);

    cfg = slt::TrainConfig();
    cfg.clip_norm = 0.0;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);

    cfg = slt::TrainConfig();
    cfg.weight_decay = -0.1;
    CHECK_THROWS_AS(cfg.validate(), slt::ConfigError);
}

TEST_CASE("one-cycle schedule hits its pinned points") {
    slt::TrainConfig cfg;
    cfg.lr = 3e-4;
    cfg.epochs = 100;
    cfg.warmup_epochs = 5;

    CHECK(slt::lr_at(0.0, cfg) == 0.0);
    CHECK(slt::lr_at(0.05, cfg) == doctest::Approx(3e-4).epsilon(1e-12));
    CHECK(slt::lr_at(0.025, cfg) == doctest::Approx(1.5e-4).epsilon(1e-12));
    CHECK(slt::lr_at(1.0, cfg) <= 1e-8 * cfg.lr);

    // Monotone up through warmup, down through the cosine arc.
    double prev = -1.0;
    for (double f = 0.0; f <= 0.05 + 1e-12; f += 0.01) {
        double lr = slt::lr_at(f, cfg);
        CHECK(lr >= prev);
        prev = lr;
    }
    prev = 1.0;
    for (double f = 0.05; f <= 1.0 + 1e-12; f += 0.05) {
        double lr = slt::lr_at(std::min(f, 1.0), cfg);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }

    CHECK_THROWS_AS((void)slt::lr_at(-0.1, cfg), slt::DomainError);
    CHECK_THROWS_AS((void)slt::lr_at(1.1, cfg), slt::DomainError);
}

TEST_CASE("label smoothed cross entropy matches hand computation") {
    // Uniform logits over two classes: every distribution gives ln 2.
    slt::Var uniform = slt::constant(slt::Tensor({1, 2}));
    slt::Var loss = slt::label_smoothed_ce(uniform, {0}, 0.1);
    CHECK(loss->value[0] == doctest::Approx(0.6931471805599453).epsilon(1e-12));

    // eps = 0 reduces to plain cross entropy.
    slt::Tensor logits({2, 3});
    double vals[] = {0.4, -1.2, 0.7, 2.0, 0.1, -0.5};
    for (std::size_t i = 0; i < 6; ++i) logits[i] = vals[i];
    std::vector<int> targets = {2, 0};
    slt::Var plain = slt::label_smoothed_ce(slt::constant(logits), targets, 0.0);
    auto row0 = oracle_log_softmax({0.4, -1.2, 0.7});
    auto row1 = oracle_log_softmax({2.0, 0.1, -0.5});
    double expected = -(row0[2] + row1[0]) / 2.0;
    CHECK(plain->value[0] == doctest::Approx(expected).epsilon(1e-12));

    // Smoothed: q = 0.9 onehot + 0.1/3.
    slt::Var smooth = slt::label_smoothed_ce(slt::constant(logits), targets, 0.1);
    double q_uniform = 0.1 / 3.0;
    double e0 = -(0.9 + q_uniform) * row0[2] - q_uniform * (row0[0] + row0[1]);
    double e1 = -(0.9 + q_uniform) * row1[0] - q_uniform * (row1[1] + row1[2]);
    CHECK(smooth->value[0] == doctest::Approx((e0 + e1) / 2.0).epsilon(1e-12));
}

TEST_CASE("label smoothed cross entropy pads and validates") {
    slt::Tensor logits({3, 4});
    for (std::size_t i = 0; i < 12; ++i) logits[i] = 0.3 * static_cast<double>(i) - 1.0;

    slt::Var padded = slt::label_smoothed_ce(slt::constant(logits), {2, -1, 1}, 0.1);
    slt::Tensor two({2, 4});
    for (std::size_t j = 0; j < 4; ++j) {
        two[j] = logits[j];
        two[4 + j] = logits[8 + j];
    }
    slt::Var dense = slt::label_smoothed_ce(slt::constant(two), {2, 1}, 0.1);
    CHECK(padded->value[0] == doctest::Approx(dense->value[0]).epsilon(1e-12));

    CHECK_THROWS_AS((void)slt::label_smoothed_ce(slt::constant(logits), {-1, -1, -1}, 0.1),
                    slt::DomainError);
    CHECK_THROWS_AS((void)slt::label_smoothed_ce(slt::constant(logits), {0, 1}, 0.1),
                    slt::DimensionError);
    CHECK_THROWS_AS((void)slt::label_smoothed_ce(slt::constant(logits), {0, 1, 9}, 0.1),
                    slt::VocabularyError);
    CHECK_THROWS_AS((void)slt::label_smoothed_ce(slt::constant(logits), {0, 1, 2}, 1.0),
                    slt::ConfigError);
}

TEST_CASE("label smoothed cross entropy gradient matches finite differences") {
    slt::Rng rng(17);
    slt::Parameter logits(slt::Tensor({3, 5}));
    for (std::size_t i = 0; i < logits.value.numel(); ++i) logits.value[i] = rng.gaussian();
    std::vector<int> targets = {1, 4, 2};

    double err = slt::grad_check(
        [&] { return slt::label_smoothed_ce(slt::leaf(logits), targets, 0.1); }, {&logits});
    CHECK(err < 1e-4);
}

TEST_CASE("adam follows the closed-form trajectory for constant gradients") {
    Probe probe;
    probe.w.value.fill(0.0);
    probe.b.value.fill(0.5);
    slt::TrainConfig cfg;
    cfg.weight_decay = 0.0;
    slt::AdamOptimizer opt(probe, cfg);

    double lr = 0.1;
    double theta = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        probe.w.zero_grad();
        probe.b.grad.fill(1.0);
        opt.step(lr);

        m = 0.9 * m + 0.1 * 1.0;
        v = 0.999 * v + 0.001 * 1.0;
        double mhat = m / (1.0 - std::pow(0.9, t));
        double vhat = v / (1.0 - std::pow(0.999, t));
        theta -= lr * mhat / (std::sqrt(vhat) + 1e-8);
        CHECK(probe.b.value[0] == doctest::Approx(theta).epsilon(1e-14));
        CHECK(probe.b.value[1] == doctest::Approx(theta).epsilon(1e-14));
    }
    // Zero-gradient parameter with zero weight decay never moves.
    for (std::size_t i = 0; i < probe.w.value.numel(); ++i) CHECK(probe.w.value[i] == 0.0);
    CHECK(opt.steps() == 3);
}

TEST_CASE("adam decay hits matrices only and frozen parameters never move") {
    Probe probe;
    probe.w.value.fill(2.0);
    probe.b.value.fill(2.0);
    slt::TrainConfig cfg;
    cfg.weight_decay = 0.5;
    slt::AdamOptimizer opt(probe, cfg);

    probe.w.zero_grad();
    probe.b.zero_grad();
    opt.step(0.1);
    // Decoupled decay: w -= lr * wd * w; the rank-1 bias is exempt.
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(probe.w.value[i] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));
    }
    CHECK(probe.b.value[0] == 2.0);

    // Freezing after construction still protects the parameter bit for bit.
    probe.w.trainable = false;
    double before = probe.w.value[0];
    probe.w.grad.fill(3.0);
    probe.b.grad.fill(3.0);
    opt.step(0.1);
    CHECK(probe.w.value[0] == before);

    probe.b.grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(opt.step(0.1), doctest::Contains("'b'"), slt::DomainError);

    Probe frozen;
    frozen.w.trainable = false;
    frozen.b.trainable = false;
    CHECK_THROWS_AS(slt::AdamOptimizer(frozen, cfg), slt::ConfigError);
}

TEST_CASE("gradient clipping rescales to the threshold") {
    Probe probe;
    probe.w.grad.fill(3.0);
    probe.b.grad.fill(4.0);
    std::vector<slt::Parameter*> params = {&probe.w, &probe.b};

    double norm = std::sqrt(4 * 9.0 + 2 * 16.0);
    double reported = slt::clip_gradients(params, 1.0);
    CHECK(reported == doctest::Approx(norm).epsilon(1e-12));
    CHECK(slt::global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-9));

    // Below the threshold nothing changes.
    probe.w.grad.fill(0.01);
    probe.b.grad.fill(0.01);
    double small = slt::global_grad_norm(params);
    CHECK(slt::clip_gradients(params, 1.0) == doctest::Approx(small).epsilon(1e-12));
    CHECK(probe.w.grad[0] == 0.01);

    CHECK_THROWS_AS((void)slt::clip_gradients(params, 0.0), slt::ConfigError);
}

TEST_CASE("frame subsampling and span projection") {
    slt::Tensor feats({5, 2});
    for (std::size_t i = 0; i < 10; ++i) feats[i] = static_cast<double>(i);
    slt::Tensor sub = slt::subsample_frames(feats, 2);
    REQUIRE(sub.rows() == 3);
    CHECK(sub[0] == 0.0);
    CHECK(sub[2] == 4.0);
    CHECK(sub[4] == 8.0);

    slt::Tensor same = slt::subsample_frames(feats, 1);
    CHECK(same.rows() == 5);

    auto span = slt::project_span(4, 9, 2, 2);
    REQUIRE(span.has_value());
    CHECK(*span == slt::pool_span(2, 4, 2));

    auto identity = slt::project_span(3, 3, 1, 1);
    REQUIRE(identity.has_value());
    CHECK(identity->first == 3);
    CHECK(identity->second == 3);

    CHECK(!slt::project_span(3, 3, 2, 1).has_value());
    CHECK_THROWS_AS((void)slt::project_span(4, 2, 1, 1), slt::DomainError);
    CHECK_THROWS_AS((void)slt::project_span(0, 2, 0, 1), slt::ConfigError);
    CHECK_THROWS_AS((void)slt::subsample_frames(feats, 0), slt::ConfigError);
}

TEST_CASE("checkpoint save and load round-trip exactly") {
    TempDir tmp;
    slt::SynthDataset data = separable_data(8, 21);
    std::vector<slt::TaggedSentence> corpus;
    for (const auto& s : data.samples) corpus.push_back(s.sentence);
    slt::GlossVocab vocab = slt::GlossVocab::build(corpus);

    slt::EmbeddingTable table;
    table.dim = data.config.feature_dim;
    table.tokens = data.gloss_names;
    for (std::size_t g = 0; g < data.gloss_names.size(); ++g) {
        std::vector<double> row(table.dim);
        for (std::size_t c = 0; c < table.dim; ++c) row[c] = data.signatures[g * table.dim + c];
        table.vectors.push_back(std::move(row));
    }

    slt::Rng rng_a(3);
    slt::PretrainModel model(tiny_encoder(), data.config.feature_dim, vocab, table, false,
                             rng_a);
    slt::Checkpoint ckpt = slt::Checkpoint::capture(model, "pretrain", 1234);
    ckpt.optimizer_steps = 7;
    ckpt.moments.push_back({"bank.tau_t_raw", {0.25}, {0.5}});

    fs::path file = tmp.path / "model.s2gc";
    ckpt.save(file);
    slt::Checkpoint back = slt::Checkpoint::load(file);
    CHECK(back.stage == "pretrain");
    CHECK(back.config_hash == 1234);
    CHECK(back.optimizer_steps == 7);
    REQUIRE(back.params.size() == ckpt.params.size());
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        CHECK(back.params[i].name == ckpt.params[i].name);
        CHECK(back.params[i].trainable == ckpt.params[i].trainable);
        REQUIRE(back.params[i].value.shape() == ckpt.params[i].value.shape());
        for (std::size_t k = 0; k < ckpt.params[i].value.numel(); ++k) {
            CHECK(back.params[i].value[k] == ckpt.params[i].value[k]);
        }
    }
    REQUIRE(back.moments.size() == 1);
    CHECK(back.moments[0].name == "bank.tau_t_raw");
    CHECK(back.moments[0].m[0] == 0.25);
    CHECK(back.moments[0].v[0] == 0.5);

    // A differently seeded model converges to identical outputs after load.
    slt::Rng rng_b(99);
    slt::PretrainModel other(tiny_encoder(), data.config.feature_dim, vocab, table, false,
                             rng_b);
    back.load_into(other);
    slt::Tensor sub = slt::subsample_frames(data.samples[0].features, 2);
    slt::Tensor e_a = model.presence_matrix(sub);
    slt::Tensor e_b = other.presence_matrix(sub);
    REQUIRE(e_a.shape() == e_b.shape());
    for (std::size_t i = 0; i < e_a.numel(); ++i) CHECK(e_a[i] == e_b[i]);

    // Subset loading restores just the encoder subtree.
    slt::Rng rng_c(123);
    slt::PretrainModel third(tiny_encoder(), data.config.feature_dim, vocab, table, false,
                             rng_c);
    ckpt.subset("encoder.").load_into(third.encoder());
    slt::Tensor z_a = model.encoder().encode(sub);
    slt::Tensor z_c = third.encoder().encode(sub);
    for (std::size_t i = 0; i < z_a.numel(); ++i) CHECK(z_a[i] == z_c[i]);

    // Strict loading rejects missing coverage in either direction.
    CHECK_THROWS_AS(ckpt.subset("encoder.").load_into(third), slt::ConfigError);
    CHECK_THROWS_AS(slt::Checkpoint::capture(model, "bogus", 0), slt::ConfigError);
    CHECK_THROWS_AS((void)slt::Checkpoint::load(tmp.path / "missing.s2gc"), slt::IoError);

    std::ofstream bad(tmp.path / "bad.s2gc", std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS_AS((void)slt::Checkpoint::load(tmp.path / "bad.s2gc"), slt::FormatError);
}

TEST_CASE("adam state resumes bit for bit through a checkpoint") {
    slt::TrainConfig cfg;
    Probe a, b;
    a.w.value.fill(1.0);
    a.b.value.fill(-0.5);
    slt::AdamOptimizer opt_a(a, cfg);

    auto grads = [](Probe& p, double s) {
        for (std::size_t i = 0; i < p.w.grad.numel(); ++i) {
            p.w.grad[i] = s * (0.1 * static_cast<double>(i) + 0.3);
        }
        for (std::size_t i = 0; i < p.b.grad.numel(); ++i) {
            p.b.grad[i] = s * (0.2 - 0.05 * static_cast<double>(i));
        }
    };
    for (int t = 0; t < 3; ++t) {
        grads(a, 1.0 + t);
        opt_a.step(0.05);
    }

    slt::Checkpoint ckpt = slt::Checkpoint::capture(a, "lm", 0);
    opt_a.state_into(ckpt);

    ckpt.load_into(b);
    slt::AdamOptimizer opt_b(b, cfg);
    opt_b.state_from(ckpt);
    CHECK(opt_b.steps() == 3);

    for (int t = 0; t < 2; ++t) {
        grads(a, 5.0 - t);
        grads(b, 5.0 - t);
        opt_a.step(0.05);
        opt_b.step(0.05);
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.w.value[i] == b.w.value[i]);
    for (std::size_t i = 0; i < 2; ++i) CHECK(a.b.value[i] == b.b.value[i]);

    slt::Checkpoint empty;
    empty.stage = "lm";
    CHECK_THROWS_AS(opt_b.state_from(empty), slt::ConfigError);
}

TEST_CASE("pretraining learns the separable synthetic set") {
    slt::SynthDataset data = separable_data(40, 5);
    slt::SynthDataset train = slt::slice_dataset(data, 0, 28);
    slt::SynthDataset eval = slt::slice_dataset(data, 28, 40);

    slt::PretrainOptions opts;
    opts.encoder = tiny_encoder();
    opts.train = quick_train(8, 2, 8, 1e-3, 3);
    slt::PretrainRun run = slt::pretrain(train, eval, opts);

    REQUIRE(run.train_losses.size() == 8);
    for (std::size_t e = 1; e < 5; ++e) {
        CHECK(run.train_losses[e] < run.train_losses[e - 1]);
    }
    CHECK(run.eval_f1.back() > run.eval_f1.front());
    CHECK(run.eval_f1.back() >= 0.5);
    CHECK(run.checkpoint.stage == "pretrain");
    CHECK(!run.checkpoint.moments.empty());
    CHECK(run.log.size() == 16);

    // Same options, same curves, bit for bit.
    slt::PretrainRun again = slt::pretrain(train, eval, opts);
    CHECK(again.train_losses == run.train_losses);
    CHECK(again.eval_f1 == run.eval_f1);

    // Round-trip through disk preserves the eval metric exactly.
    TempDir tmp;
    fs::path file = tmp.path / "pre.s2gc";
    run.checkpoint.save(file);
    slt::Checkpoint back = slt::Checkpoint::load(file);

    std::vector<slt::TaggedSentence> corpus;
    for (const auto& s : train.samples) corpus.push_back(s.sentence);
    slt::GlossVocab vocab = slt::GlossVocab::build(corpus);
    slt::EmbeddingTable table;
    table.dim = data.config.feature_dim;
    table.tokens = data.gloss_names;
    for (std::size_t g = 0; g < data.gloss_names.size(); ++g) {
        std::vector<double> row(table.dim);
        for (std::size_t c = 0; c < table.dim; ++c) row[c] = data.signatures[g * table.dim + c];
        table.vectors.push_back(std::move(row));
    }
    slt::Rng rng(777);
    slt::PretrainModel fresh(opts.encoder, data.config.feature_dim, vocab, table, false, rng);
    back.load_into(fresh);

    std::vector<std::set<std::size_t>> predicted_a, predicted_b, gold;
    for (const auto& sample : eval.samples) {
        slt::Tensor sub = slt::subsample_frames(sample.features, 2);
        predicted_a.push_back(slt::presence_set(
            run.model->presence_for(sub).aggregate->value, opts.threshold));
        predicted_b.push_back(
            slt::presence_set(fresh.presence_for(sub).aggregate->value, opts.threshold));
        std::set<std::size_t> g;
        for (const auto& gl : slt::extract_pseudo_glosses(sample.sentence)) {
            int idx = vocab.index_of(gl);
            if (idx >= 0) g.insert(static_cast<std::size_t>(idx));
        }
        gold.push_back(g);
    }
    CHECK(slt::presence_prf1(predicted_a, gold).f1 ==
          doctest::Approx(slt::presence_prf1(predicted_b, gold).f1).epsilon(1e-12));
}

TEST_CASE("pretrain guards its inputs") {
    slt::SynthDataset data = separable_data(8, 5);
    slt::PretrainOptions opts;
    opts.encoder = tiny_encoder();
    opts.train = quick_train(4, 1, 4, 1e-3, 3);

    opts.threshold = 1.5;
    CHECK_THROWS_AS((void)slt::pretrain(data, data, opts), slt::ConfigError);
    opts.threshold = 0.2;

    slt::SynthDataset empty = slt::slice_dataset(data, 0, 0);
    CHECK_THROWS_AS((void)slt::pretrain(empty, data, opts), slt::DomainError);
    CHECK_THROWS_AS((void)slt::slice_dataset(data, 5, 3), slt::DomainError);
    CHECK_THROWS_AS((void)slt::slice_dataset(data, 0, 99), slt::DomainError);
}

TEST_CASE("translation training drives the loss down deterministically") {
    slt::SynthDataset data = separable_data(14, 9);
    slt::SynthDataset train = slt::slice_dataset(data, 0, 10);
    slt::SynthDataset eval = slt::slice_dataset(data, 10, 14);

    slt::TranslationOptions opts;
    opts.encoder = tiny_encoder();
    opts.decoder.d_model = 32;
    opts.decoder.layers = 2;
    opts.decoder.heads = 2;
    opts.decoder.ffn = 64;
    opts.decoder.lora_rank = 2;
    opts.decoder.lora_alpha = 2.0;
    opts.lm_epochs = 2;
    opts.train = quick_train(6, 1, 4, 1e-3, 4);

    slt::TranslationRun run = slt::train_translation(train, eval, opts);
    REQUIRE(run.train_losses.size() == 6);
    REQUIRE(run.eval_losses.size() == 6);
    CHECK(run.train_losses.back() < run.train_losses.front());
    CHECK(run.expanded == 0);
    CHECK(run.checkpoint.stage == "translate");
    CHECK(run.params.overall.trainable > 0);
    CHECK(run.params.overall.total > run.params.overall.trainable);
    CHECK(run.model->lm().frozen());
    CHECK(run.model->lm().adapted());

    slt::TranslationRun again = slt::train_translation(train, eval, opts);
    CHECK(again.train_losses == run.train_losses);
    CHECK(again.eval_losses == run.eval_losses);

    // Frozen parameters never drift, whatever the epoch count.
    slt::TranslationOptions shorter = opts;
    shorter.train.epochs = 2;
    slt::TranslationRun brief = slt::train_translation(train, eval, shorter);
    std::size_t frozen_checked = 0;
    for (const auto& entry : run.checkpoint.params) {
        if (entry.trainable) continue;
        for (const auto& other : brief.checkpoint.params) {
            if (other.name != entry.name) continue;
            REQUIRE(other.value.shape() == entry.value.shape());
            for (std::size_t i = 0; i < entry.value.numel(); ++i) {
                CHECK(other.value[i] == entry.value[i]);
            }
            ++frozen_checked;
            break;
        }
    }
    CHECK(frozen_checked > 0);

    // Generation produces a scoreable corpus.
    slt::EvalReport report =
        slt::translate_corpus(*run.model, train, run.tokenizer, 2, 2, 12);
    CHECK(report.corpus_size == 10);
    CHECK(report.bleu1 >= 0.0);
    CHECK(report.bleu1 <= 100.0);
}

TEST_CASE("frozen features mode trains a strict subset of parameters") {
    slt::SynthDataset data = separable_data(10, 13);
    slt::SynthDataset train = slt::slice_dataset(data, 0, 8);
    slt::SynthDataset eval = slt::slice_dataset(data, 8, 10);

    slt::TranslationOptions opts;
    opts.encoder = tiny_encoder();
    opts.decoder.d_model = 32;
    opts.decoder.layers = 2;
    opts.decoder.heads = 2;
    opts.decoder.ffn = 64;
    opts.decoder.lora_rank = 2;
    opts.decoder.lora_alpha = 2.0;
    opts.lm_epochs = 1;
    opts.train = quick_train(2, 1, 4, 1e-3, 4);

    slt::TranslationRun full = slt::train_translation(train, eval, opts);
    opts.frozen_features = true;
    slt::TranslationRun frozen = slt::train_translation(train, eval, opts);

    CHECK(frozen.params.overall.trainable < full.params.overall.trainable);
    CHECK(frozen.params.overall.total == full.params.overall.total);
    for (const auto& [name, count] : frozen.params.components) {
        if (name == "encoder") CHECK(count.trainable == 0);
    }
}

TEST_CASE("pretrain checkpoint seeds the translation encoder") {
    slt::SynthDataset data = separable_data(16, 5);
    slt::SynthDataset train = slt::slice_dataset(data, 0, 12);
    slt::SynthDataset eval = slt::slice_dataset(data, 12, 16);

    slt::PretrainOptions popts;
    popts.encoder = tiny_encoder();
    popts.train = quick_train(3, 1, 8, 1e-3, 3);
    slt::PretrainRun pre = slt::pretrain(train, eval, popts);

    slt::DecoderConfig dec;
    dec.vocab = 64;
    dec.d_model = 32;
    dec.layers = 2;
    dec.heads = 2;
    dec.ffn = 64;
    dec.lora_rank = 2;
    dec.lora_alpha = 2.0;
    slt::Rng rng(55);
    slt::SignTranslator fresh(tiny_encoder(), data.config.feature_dim, dec, rng);
    pre.checkpoint.subset("encoder.").load_into(fresh.encoder());

    slt::Tensor sub = slt::subsample_frames(train.samples[0].features, 2);
    slt::Tensor from_pre = pre.model->encoder().encode(sub);
    slt::Tensor from_fresh = fresh.encoder().encode(sub);
    REQUIRE(from_pre.shape() == from_fresh.shape());
    for (std::size_t i = 0; i < from_pre.numel(); ++i) CHECK(from_pre[i] == from_fresh[i]);

    // The full pipeline accepts the checkpoint and rejects wrong stages.
    slt::TranslationOptions topts;
    topts.encoder = tiny_encoder();
    topts.decoder = dec;
    topts.lm_epochs = 1;
    topts.train = quick_train(2, 1, 4, 1e-3, 4);
    topts.encoder_init = &pre.checkpoint;
    slt::TranslationRun run = slt::train_translation(train, eval, topts);
    CHECK(std::isfinite(run.train_losses.back()));

    slt::Checkpoint wrong = run.checkpoint;
    topts.encoder_init = &wrong;
    CHECK_THROWS_AS((void)slt::train_translation(train, eval, topts), slt::ConfigError);
}

TEST_CASE("unseen target tokens trigger vocabulary expansion") {
    slt::SynthDataset data = separable_data(16, 31);
    slt::SynthDataset train = slt::slice_dataset(data, 0, 12);
    slt::SynthDataset eval = slt::slice_dataset(data, 12, 16);

    std::vector<slt::TaggedSentence> lm_corpus = {train.samples[0].sentence};

    slt::Tokenizer lm_tok = [&] {
        std::vector<std::string> words;
        for (const auto& s : lm_corpus) {
            for (const auto& tok : s.tokens) words.push_back(tok.surface);
        }
        return slt::Tokenizer::build(words);
    }();
    std::size_t expect = 0;
    {
        std::set<std::string> seen;
        for (const auto& sample : train.samples) {
            for (const auto& tok : sample.sentence.tokens) {
                if (lm_tok.id_of(tok.surface) < 0 && seen.insert(tok.surface).second) ++expect;
            }
        }
    }
    REQUIRE(expect > 0);

    slt::TranslationOptions opts;
    opts.encoder = tiny_encoder();
    opts.decoder.d_model = 32;
    opts.decoder.layers = 2;
    opts.decoder.heads = 2;
    opts.decoder.ffn = 64;
    opts.decoder.lora_rank = 2;
    opts.decoder.lora_alpha = 2.0;
    opts.lm_epochs = 1;
    opts.train = quick_train(2, 1, 4, 1e-3, 4);
    opts.lm_corpus = &lm_corpus;

    slt::TranslationRun run = slt::train_translation(train, eval, opts);
    CHECK(run.expanded == expect);
    CHECK(run.tokenizer.size() == run.model->lm().config().vocab);
    CHECK(run.model->lm().embeddings().trainable == false);
    CHECK(std::isfinite(run.train_losses.back()));
}

TEST_CASE("training log serializes as line-delimited records") {
    TempDir tmp;
    std::vector<slt::TrainLogEntry> log = {
        {0, "train", 0.75, 1e-4, 0.0},
        {0, "eval", 0.80, 1e-4, 0.4},
    };
    fs::path file = tmp.path / "log.jsonl";
    slt::save_training_log(file, log);

    std::ifstream in(file);
    std::string line;
    REQUIRE(std::getline(in, line));
    nlohmann::json rec = nlohmann::json::parse(line);
    CHECK(rec.at("epoch").get<int>() == 0);
    CHECK(rec.at("split").get<std::string>() == "train");
    CHECK(rec.at("loss").get<double>() == 0.75);
    REQUIRE(std::getline(in, line));
    rec = nlohmann::json::parse(line);
    CHECK(rec.at("split").get<std::string>() == "eval");
    CHECK(rec.at("metric").get<double>() == 0.4);
    CHECK(!std::getline(in, line));
}

} // TEST_SUITE
