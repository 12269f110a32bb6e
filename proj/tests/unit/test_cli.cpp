#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "strokecast/dataset.hpp"
#include "strokecast/model.hpp"

namespace fs = std::filesystem;
using namespace strokecast;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

const std::string kFixtures = STROKECAST_FIXTURES;

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("strokecast_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Run cli(const std::string& args) {
    const std::string cmd = "cd '" + work_dir().string() + "' && '" STROKECAST_CLI "' " + args + " 2>&1";
    Run r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) ++n;
    return n;
}

const char* kTiny = "--embed-dim 8 --heads 2 --epochs 2 --batch-size 8 --eval-every 0 --seed 3";

}  // namespace

TEST_CASE("synth is deterministic and validates clean") {
    REQUIRE(cli("synth --n 12 --seed 5 --out a.csv").code == 0);
    REQUIRE(cli("synth --n 12 --seed 5 --out b.csv").code == 0);
    CHECK(slurp(work_dir() / "a.csv") == slurp(work_dir() / "b.csv"));
    const Run v = cli("validate --data a.csv");
    INFO(v.out);
    CHECK(v.code == 0);
    CHECK(v.out.find("violations 0") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 2") {
    CHECK(cli("validate --data a.csv --vocab /nonexistent/vocab.csv").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("score --predictions x.csv").code == 2);
    CHECK(cli("analyze --kind vote --out-dir an").code == 2);
    CHECK(cli("analyze --kind nonsense --data a.csv").code == 2);
}

TEST_CASE("score on the hand fixtures") {
    const Run r = cli("score --predictions " + kFixtures + "/eq2_predictions.csv --truth " + kFixtures +
                      "/eq2_truth.csv --out hand_score.csv");
    INFO(r.out);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Score 1.53972") != std::string::npos);
    CHECK(slurp(work_dir() / "hand_score.csv") == slurp(kFixtures + "/eq2_score.golden.csv"));

    const Run five = cli("score --predictions " + kFixtures + "/five_samples.csv --truth " + kFixtures +
                         "/eq2_truth.csv");
    CHECK(five.code == 2);
    CHECK(five.out.find("expected 6 sample sets, got 5") != std::string::npos);

    const Run perfect = cli("score --predictions " + kFixtures + "/perfect_predictions.csv --truth " + kFixtures +
                            "/eq2_truth.csv");
    CHECK(perfect.code == 0);
    CHECK(perfect.out.find("Score 0.000000") != std::string::npos);
}

TEST_CASE("config files feed train, the command line wins, unknown keys fail") {
    REQUIRE(cli("synth --n 16 --seed 9 --out t.csv").code == 0);
    {
        std::ofstream cfg(work_dir() / "run.cfg");
        cfg << "# tiny run\ndata = t.csv\nembed-dim = 8\nheads = 2\nepochs = 2\nbatch-size = 8\n"
               "eval-every = 0\nembedding-mode = baseline\n";
    }
    REQUIRE(cli("train --config run.cfg --out base.ckpt").code == 0);
    REQUIRE(cli("train --config run.cfg --embedding-mode modified --out mod.ckpt").code == 0);
    const Forecaster base = load_checkpoint((work_dir() / "base.ckpt").string());
    const Forecaster mod = load_checkpoint((work_dir() / "mod.ckpt").string());
    CHECK(base.config.embed_dim == 8);
    CHECK(base.config.embedding_mode == EmbeddingMode::baseline);
    CHECK(mod.config.embedding_mode == EmbeddingMode::modified);
    ModelConfig same = mod.config;
    same.embedding_mode = EmbeddingMode::baseline;
    CHECK(same == base.config);
    CHECK(line_count(work_dir() / "base.ckpt.report.csv") == 3);

    {
        std::ofstream cfg(work_dir() / "bad.cfg");
        cfg << "data = t.csv\nbogus = 1\n";
    }
    const Run bad = cli("train --config bad.cfg --out never.ckpt");
    CHECK(bad.code == 2);
    CHECK(bad.out.find("bogus") != std::string::npos);
    CHECK_FALSE(fs::exists(work_dir() / "never.ckpt"));
}

TEST_CASE("predict writes samples x predicted strokes rows and analyze reads them") {
    REQUIRE(cli("synth --n 10 --seed 4 --out p.csv").code == 0);
    REQUIRE(cli(std::string("train --data p.csv --out p.ckpt ") + kTiny).code == 0);
    REQUIRE(cli("predict --checkpoint p.ckpt --data p.csv --samples 6 --seed 2 --out p_pred.csv").code == 0);
    REQUIRE(cli("predict --checkpoint p.ckpt --data p.csv --samples 6 --seed 2 --jobs 3 --out p_pred3.csv").code ==
            0);
    const auto rallies = parse_dataset((work_dir() / "p.csv").string(), ShotTypeVocab::default_vocab()).rallies;
    std::size_t expected = 0;
    for (const auto& r : rallies) expected += r.size() - 4;
    CHECK(line_count(work_dir() / "p_pred.csv") == 1 + 6 * expected);
    CHECK(slurp(work_dir() / "p_pred.csv") == slurp(work_dir() / "p_pred3.csv"));

    const Run s = cli("score --predictions p_pred.csv --truth p.csv");
    CHECK(s.code == 0);
    CHECK(s.out.find("Score ") != std::string::npos);

    for (const char* kind : {"vote", "zones", "trend", "probability"}) {
        INFO(kind);
        CHECK(cli(std::string("analyze --kind ") + kind + " --predictions p_pred.csv --out-dir an").code == 0);
    }
    CHECK(cli("analyze --kind shot-by-round --data p.csv --out-dir an").code == 0);
    CHECK(fs::exists(work_dir() / "an" / "analysis_vote_stroke.csv"));
    CHECK(fs::exists(work_dir() / "an" / "analysis_zones_landing.csv"));
    CHECK(fs::exists(work_dir() / "an" / "analysis_shot_ball_round.csv"));
}

TEST_CASE("version string names the build") {
    const Run r = cli("--version");
    CHECK(r.code == 0);
    CHECK(r.out.rfind("strokecast ", 0) == 0);
    CHECK(r.out.find("C++2020") != std::string::npos);
}
