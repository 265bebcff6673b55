#include "doctest.h"

#include "cli.hpp"
#include "slt/pgloss.hpp"
#include "slt/pipeline.hpp"
#include "slt/spatial.hpp"
#include "slt/synthdata.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"slt"};
    for (const auto& a : args) argv.push_back(a.c_str());

    std::ostringstream out, err;
    std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
    std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
    int code = slt::cli::run(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CliFixture {
    fs::path root, data, pre;

    CliFixture() {
        root = fs::temp_directory_path() / "slt_cli_fixture";
        fs::remove_all(root);
        fs::create_directories(root);
        data = root / "data";
        pre = root / "pre";

        std::ofstream(root / "synth.json")
            << R"({"glosses": 6, "feature_dim": 16, "samples": 20,
                   "min_glosses_per_sample": 1, "max_glosses_per_sample": 3,
                   "min_segment": 4, "max_segment": 7,
                   "min_transition": 1, "max_transition": 2,
                   "noise": 0.02, "seed": 5})";
        std::ofstream(root / "pretrain.json")
            << R"({"encoder": {"layers": 2, "hidden": 32, "heads": 4, "ffn": 64,
                               "window": 5, "downsample_after": 1},
                   "train": {"lr": 0.001, "epochs": 2, "warmup_epochs": 1,
                             "batch": 8, "seed": 3},
                   "threshold": 0.2, "eval_fraction": 0.2})";

        CliResult synth = run_cli({"synth", "--config", (root / "synth.json").string(),
                                   "--out", data.string()});
        REQUIRE(synth.code == 0);
        CliResult pret =
            run_cli({"pretrain", "--config", (root / "pretrain.json").string(), "--data",
                     data.string(), "--out", pre.string()});
        REQUIRE(pret.code == 0);
    }
    ~CliFixture() { fs::remove_all(root); }
};

CliFixture& fixture() {
    static CliFixture f;
    return f;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("argument parsing rejects bad invocations") {
    CHECK(run_cli({}).code == 1);
    CHECK(run_cli({"bogus"}).code == 1);
    CHECK(run_cli({"synth", "--config", "c.json", "--out", "d", "--mystery"}).code == 1);
    CHECK(run_cli({"synth", "--out", "d"}).code == 1);
    CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("synth writes a dataset and a run manifest") {
    CliFixture& f = fixture();
    CHECK(fs::exists(f.data / "corpus.jsonl"));
    CHECK(fs::exists(f.data / "manifest.json"));
    CHECK(fs::exists(f.data / "run_manifest.json"));

    nlohmann::json manifest = nlohmann::json::parse(slurp(f.data / "run_manifest.json"));
    CHECK(manifest.at("command").get<std::string>() == "synth");
    CHECK(manifest.at("seed").get<std::uint64_t>() == 5);
    CHECK(manifest.at("config_hash").get<std::uint64_t>() != 0);
    CHECK(manifest.at("versions").at("sltkit").get<std::string>() == "0.1.0");

    // Same config, second directory: identical artifacts.
    fs::path twin = f.root / "data_twin";
    CliResult again = run_cli({"synth", "--config", (f.root / "synth.json").string(),
                               "--out", twin.string()});
    REQUIRE(again.code == 0);
    CHECK(slurp(twin / "corpus.jsonl") == slurp(f.data / "corpus.jsonl"));
    CHECK(slurp(twin / "embeddings.txt") == slurp(f.data / "embeddings.txt"));

    // The --seed flag overrides the config seed.
    fs::path reseeded = f.root / "data_reseeded";
    CliResult other = run_cli({"synth", "--config", (f.root / "synth.json").string(),
                               "--out", reseeded.string(), "--seed", "99"});
    REQUIRE(other.code == 0);
    CHECK(slurp(reseeded / "corpus.jsonl") != slurp(f.data / "corpus.jsonl"));
    nlohmann::json remanifest =
        nlohmann::json::parse(slurp(reseeded / "run_manifest.json"));
    CHECK(remanifest.at("seed").get<std::uint64_t>() == 99);
}

TEST_CASE("synth validates its config") {
    CliFixture& f = fixture();
    fs::path bad = f.root / "bad.json";

    std::ofstream(bad) << R"({"glosses": 6, "mystery": 1})";
    CHECK(run_cli({"synth", "--config", bad.string(), "--out", (f.root / "x").string()})
              .code == 1);

    std::ofstream(bad) << "{ not json";
    CHECK(run_cli({"synth", "--config", bad.string(), "--out", (f.root / "x").string()})
              .code == 1);

    std::ofstream(bad) << R"({"glosses": "six"})";
    CHECK(run_cli({"synth", "--config", bad.string(), "--out", (f.root / "x").string()})
              .code == 1);

    CliResult missing = run_cli(
        {"synth", "--config", "/nonexistent/nope.json", "--out", (f.root / "x").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("/nonexistent/nope.json") != std::string::npos);
}

TEST_CASE("extract recovers the generator vocabulary") {
    CliFixture& f = fixture();
    fs::path vocab_file = f.root / "vocab" / "glosses.txt";
    CliResult res = run_cli({"extract", "--corpus", (f.data / "corpus.jsonl").string(),
                             "--out", vocab_file.string()});
    REQUIRE(res.code == 0);
    CHECK(res.out.find("glosses 6") != std::string::npos);

    slt::GlossVocab extracted = slt::GlossVocab::load(vocab_file);
    slt::GlossVocab generated = slt::GlossVocab::load(f.data / "glosses.txt");
    std::set<std::string> a(extracted.glosses().begin(), extracted.glosses().end());
    std::set<std::string> b(generated.glosses().begin(), generated.glosses().end());
    CHECK(a == b);
    CHECK(fs::exists(f.root / "vocab" / "run_manifest.json"));

    CHECK(run_cli({"extract", "--corpus", "/nonexistent/c.jsonl", "--out",
                   (f.root / "v2.txt").string()})
              .code == 1);
}

TEST_CASE("pretrain writes checkpoint, vocabulary, log, and sidecar config") {
    CliFixture& f = fixture();
    CHECK(fs::exists(f.pre / "pretrain.s2gc"));
    CHECK(fs::exists(f.pre / "glosses.txt"));
    CHECK(fs::exists(f.pre / "log.jsonl"));
    CHECK(fs::exists(f.pre / "pretrain_config.json"));
    CHECK(fs::exists(f.pre / "run_manifest.json"));

    slt::Checkpoint ckpt = slt::Checkpoint::load(f.pre / "pretrain.s2gc");
    CHECK(ckpt.stage == "pretrain");
    CHECK(!ckpt.moments.empty());

    std::ifstream log(f.pre / "log.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        nlohmann::json rec = nlohmann::json::parse(line);
        CHECK(rec.contains("epoch"));
        CHECK(rec.contains("loss"));
        ++lines;
    }
    CHECK(lines == 4);  // 2 epochs x train/eval

    CHECK(run_cli({"pretrain", "--config", (f.root / "pretrain.json").string(), "--data",
                   "/nonexistent/dir", "--out", (f.root / "p2").string()})
              .code == 1);
}

TEST_CASE("spot exports a heatmap and a span list") {
    CliFixture& f = fixture();
    slt::SynthDataset data = slt::load_dataset(f.data);
    const std::string sample_id = data.samples[0].id;
    fs::path out = f.root / "spot";

    CliResult res =
        run_cli({"spot", "--ckpt", (f.pre / "pretrain.s2gc").string(), "--data",
                 f.data.string(), "--sample", sample_id, "--threshold", "0.2", "--out",
                 out.string()});
    REQUIRE(res.code == 0);

    slt::Tensor heatmap = slt::load_features(out / "heatmap.s2gf");
    slt::GlossVocab vocab = slt::GlossVocab::load(f.pre / "glosses.txt");
    CHECK(heatmap.cols() == vocab.size() + 1);
    for (std::size_t i = 0; i < heatmap.numel(); ++i) {
        CHECK(heatmap[i] >= 0.0);
        CHECK(heatmap[i] <= 1.0);
    }

    std::ifstream spans(out / "spans.txt");
    REQUIRE(spans.good());
    std::string line;
    while (std::getline(spans, line)) {
        std::istringstream fields(line);
        std::string gloss;
        std::size_t start = 0, end = 0;
        fields >> gloss >> start >> end;
        CHECK(vocab.index_of(gloss) >= 0);
        CHECK(start <= end);
        CHECK(end < heatmap.rows());
    }

    // Threshold validation fires before any file access.
    CliResult bad = run_cli({"spot", "--ckpt", "/nonexistent/x.s2gc", "--data",
                             "/nonexistent/d", "--sample", "0", "--threshold", "1.1",
                             "--out", (f.root / "s2").string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("threshold") != std::string::npos);

    CliResult unknown =
        run_cli({"spot", "--ckpt", (f.pre / "pretrain.s2gc").string(), "--data",
                 f.data.string(), "--sample", "no_such_sample", "--threshold", "0.2",
                 "--out", (f.root / "s3").string()});
    CHECK(unknown.code == 1);
    CHECK(unknown.err.find("no_such_sample") != std::string::npos);
}

TEST_CASE("evaluate prints a perfect table on the identity corpus") {
    CliFixture& f = fixture();
    fs::path hyps = f.root / "id.txt";
    std::ofstream(hyps) << "der himmel ist blau .\nes regnet heute stark .\n";

    CliResult res = run_cli({"evaluate", "--hyps", hyps.string(), "--refs", hyps.string()});
    REQUIRE(res.code == 0);
    CHECK(res.out.find("BLEU-1 100.00") != std::string::npos);
    CHECK(res.out.find("BLEU-2 100.00") != std::string::npos);
    CHECK(res.out.find("BLEU-3 100.00") != std::string::npos);
    CHECK(res.out.find("BLEU-4 100.00") != std::string::npos);
    CHECK(res.out.find("ROUGE-L 100.00") != std::string::npos);

    fs::path out = f.root / "eval";
    CliResult saved = run_cli({"evaluate", "--hyps", hyps.string(), "--refs", hyps.string(),
                               "--out", out.string()});
    REQUIRE(saved.code == 0);
    nlohmann::json report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("bleu4").get<double>() == 100.0);
    CHECK(report.at("sentences").get<std::size_t>() == 2);
    CHECK(fs::exists(out / "run_manifest.json"));

    CHECK(run_cli({"evaluate", "--hyps", "/nonexistent/h.txt", "--refs", hyps.string()})
              .code == 1);
}

TEST_CASE("params prints the stored parameter table") {
    CliFixture& f = fixture();
    CliResult res = run_cli({"params", "--ckpt", (f.pre / "pretrain.s2gc").string()});
    REQUIRE(res.code == 0);
    CHECK(res.out.find("stage pretrain") != std::string::npos);
    CHECK(res.out.find("encoder") != std::string::npos);
    CHECK(res.out.find("bank") != std::string::npos);
    CHECK(res.out.find("total") != std::string::npos);

    CHECK(run_cli({"params", "--ckpt", "/nonexistent/x.s2gc"}).code == 1);
}

TEST_CASE("train produces a decodable model directory") {
    CliFixture& f = fixture();
    std::ofstream(f.root / "train.json")
        << R"({"encoder": {"layers": 2, "hidden": 32, "heads": 4, "ffn": 64,
                           "window": 5, "downsample_after": 1},
               "decoder": {"d_model": 32, "layers": 2, "heads": 2, "ffn": 64,
                           "lora_rank": 2, "lora_alpha": 2.0},
               "train": {"lr": 0.001, "epochs": 1, "warmup_epochs": 0,
                         "batch": 4, "seed": 4},
               "lm_epochs": 1, "eval_fraction": 0.2, "max_len": 10})";

    fs::path out = f.root / "tr";
    CliResult res = run_cli({"train", "--config", (f.root / "train.json").string(),
                             "--data", f.data.string(), "--out", out.string(), "--ckpt",
                             (f.pre / "pretrain.s2gc").string(), "--beam-width", "1"});
    REQUIRE(res.code == 0);
    CHECK(res.out.find("expanded") != std::string::npos);
    CHECK(res.out.find("total") != std::string::npos);
    CHECK(res.out.find("BLEU-4") != std::string::npos);

    slt::Checkpoint model = slt::Checkpoint::load(out / "model.s2gc");
    CHECK(model.stage == "translate");
    slt::Tokenizer tok = slt::Tokenizer::load(out / "tokens.txt");
    CHECK(tok.size() > 0);
    nlohmann::json report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("sentences").get<std::size_t>() == 4);

    std::ifstream hyps(out / "hyps.txt");
    std::size_t hyp_lines = 0;
    std::string line;
    while (std::getline(hyps, line)) ++hyp_lines;
    CHECK(hyp_lines == 4);

    // A translation checkpoint is not a valid encoder init.
    CliResult wrong = run_cli({"train", "--config", (f.root / "train.json").string(),
                               "--data", f.data.string(), "--out",
                               (f.root / "tr2").string(), "--ckpt",
                               (out / "model.s2gc").string()});
    CHECK(wrong.code == 1);

    std::ofstream(f.root / "bad_train.json") << R"({"decoder": {"vocab": 99}})";
    CliResult bad = run_cli({"train", "--config", (f.root / "bad_train.json").string(),
                             "--data", f.data.string(), "--out",
                             (f.root / "tr3").string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("vocab") != std::string::npos);
}

} // TEST_SUITE
