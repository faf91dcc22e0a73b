#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "dsmt/checkpoint.hpp"
#include "dsmt/config.hpp"
#include "dsmt/rng.hpp"

using namespace dsmt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    explicit TempDir(const std::string& tag) {
        dir = fs::temp_directory_path() / ("dsmt_ckpt_" + tag + "_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

Checkpoint sample_checkpoint() {
    Checkpoint ckpt;
    ckpt.vocab_digest = 0xDEADBEEFCAFEF00DULL;
    ckpt.best_valid_mrr = 0.4375;
    ckpt.epoch = 17;
    ckpt.config_text = "seed = 42\nembed_dim = 8\n";
    Rng rng(3);
    Tensor a(Shape{3, 4});
    for (double& v : a.values()) v = rng.uniform(-1, 1);
    Tensor b(Shape{5});
    for (double& v : b.values()) v = rng.uniform(-1, 1);
    ckpt.params.emplace_back("alpha", a);
    ckpt.params.emplace_back("beta", b);
    return ckpt;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bitwise and byte-identical") {
    TempDir td("roundtrip");
    Checkpoint ckpt = sample_checkpoint();
    const std::string p1 = td.path("a.ckpt");
    const std::string p2 = td.path("b.ckpt");
    save_checkpoint(p1, ckpt);
    Checkpoint back = load_checkpoint(p1);
    CHECK(back.vocab_digest == ckpt.vocab_digest);
    CHECK(back.best_valid_mrr == ckpt.best_valid_mrr);
    CHECK(back.epoch == ckpt.epoch);
    CHECK(back.config_text == ckpt.config_text);
    REQUIRE(back.params.size() == ckpt.params.size());
    for (std::size_t p = 0; p < back.params.size(); ++p) {
        CHECK(back.params[p].first == ckpt.params[p].first);
        REQUIRE(back.params[p].second.shape() == ckpt.params[p].second.shape());
        for (std::size_t i = 0; i < back.params[p].second.size(); ++i)
            CHECK(back.params[p].second[i] == ckpt.params[p].second[i]);
    }
    save_checkpoint(p2, back);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("digest mismatch is rejected before any model state escapes") {
    TempDir td("digest");
    save_checkpoint(td.path("m.ckpt"), sample_checkpoint());
    CHECK_THROWS_AS(load_checkpoint(td.path("m.ckpt"), 0x1234), CheckpointDigestError);
    CHECK_NOTHROW(load_checkpoint(td.path("m.ckpt"), 0xDEADBEEFCAFEF00DULL));
}

TEST_CASE("unsupported version and truncation are distinct errors") {
    TempDir td("corrupt");
    const std::string p = td.path("m.ckpt");
    save_checkpoint(p, sample_checkpoint());

    std::string bytes = slurp(p);
    // version field sits right after the 4-byte magic
    std::string versioned = bytes;
    versioned[4] = 9;
    std::ofstream(td.path("v.ckpt"), std::ios::binary) << versioned;
    CHECK_THROWS_AS(load_checkpoint(td.path("v.ckpt")), CheckpointVersionError);

    std::string truncated = bytes.substr(0, bytes.size() - 24);
    std::ofstream(td.path("t.ckpt"), std::ios::binary) << truncated;
    try {
        load_checkpoint(td.path("t.ckpt"));
        FAIL("expected CheckpointTruncationError");
    } catch (const CheckpointTruncationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected") != std::string::npos);
        CHECK(msg.find("bytes") != std::string::npos);
    }

    std::ofstream(td.path("garbage.ckpt"), std::ios::binary) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(td.path("garbage.ckpt")), DataError);
}

TEST_CASE("config parsing: comments, defaults and unknown keys") {
    RunConfig cfg = parse_config_text(
        "# a comment line\n"
        "seed = 99   # trailing comment\n"
        "\n"
        "embed_dim = 16\n"
        "composition = mult\n"
        "lambda1 = 0.5\n",
        "<test>");
    CHECK(cfg.seed == 99);
    CHECK(cfg.embed_dim == 16);
    CHECK(cfg.composition == "mult");
    CHECK(cfg.lambda1 == 0.5);
    CHECK(cfg.batch_size == 128);  // untouched default

    CHECK_THROWS_AS(parse_config_text("no_such_key = 1\n", "<test>"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("just a line\n", "<test>"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seed = abc\n", "<test>"), ConfigError);
}

TEST_CASE("echoed config reproduces itself exactly") {
    RunConfig cfg;
    cfg.seed = 1234;
    cfg.embed_init_dim = 12;
    cfg.embed_dim = 24;
    cfg.reshape_h = 4;
    cfg.reshape_w = 6;
    cfg.lambda1 = 0.125;
    cfg.learning_rate = 0.0003;
    cfg.train_path = "/data/train.txt";
    const std::string echoed = config_text(cfg);
    RunConfig back = parse_config_text(echoed, "<echo>");
    CHECK(config_text(back) == echoed);
}

TEST_CASE("ablation aliases") {
    RunConfig cfg;
    apply_ablation(cfg, "no-gc");
    CHECK(cfg.lambda1 == 0.0);
    CHECK(cfg.lambda2 == 0.0);
    apply_ablation(cfg, "no-mhsa");
    CHECK(cfg.attention_mode == "uniform");
    apply_ablation(cfg, "no-tu");
    CHECK(cfg.uncertainty_k == 0.0);
    CHECK_THROWS_AS(apply_ablation(cfg, "no-everything"), ConfigError);
}

TEST_CASE("config conversion validates the model geometry") {
    RunConfig cfg;
    cfg.reshape_h = 7;  // 7*20 != 200
    CHECK_THROWS_AS(model_config(cfg), ConfigError);

    RunConfig bad_mode;
    bad_mode.attention_mode = "fancy";
    CHECK_THROWS_AS(model_config(bad_mode), ConfigError);

    RunConfig bad_train;
    bad_train.batch_size = 0;
    CHECK_THROWS_AS(train_config(bad_train), ConfigError);

    RunConfig ok;
    ModelConfig mc = model_config(ok);
    CHECK(mc.encoder.composition == Composition::Corr);
    CHECK(mc.attention.mode == AttentionMode::MHSA);
    CHECK(mc.decoder.flat_dim() == 32 * 18 * 18);
    TrainConfig tc = train_config(ok);
    CHECK(tc.learning_rate == 0.001);
}

TEST_CASE("checkpoint path resolution") {
    RunConfig cfg;
    cfg.out_dir = "runs/x";
    CHECK(resolved_checkpoint_path(cfg) == "runs/x/model.ckpt");
    cfg.checkpoint_path = "/abs/model.ckpt";
    CHECK(resolved_checkpoint_path(cfg) == "/abs/model.ckpt");
}
