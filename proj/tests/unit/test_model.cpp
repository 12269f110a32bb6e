#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "oracles.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/model.hpp"

using namespace strokecast;
namespace st = strokecast::testing;

namespace {

bool same_bits(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool rows_equal(const Array& a, const Array& b, std::size_t row) {
    const std::size_t w = a.dim(1);
    return same_bits(a.values().subspan(row * w, w), b.values().subspan(row * w, w));
}

struct Setup {
    ShotTypeVocab vocab = ShotTypeVocab::default_vocab();
    ModelConfig config;
    CourtSpec court;
    Rally rally;
    PlayerIndex players;
    ModelParams params;

    explicit Setup(std::uint64_t seed, std::size_t length = 8) {
        config.n_players = 2;
        config.dropout_rate = 0.0;
        rally = st::random_rally(seed, length, vocab);
        players = PlayerIndex::from_rallies(std::span<const Rally>(&rally, 1));
        params = ModelParams::initialize(config, seed);
    }

    ForwardGraph run(Tape& tape, const Rally& r) const {
        const ParamVars p(tape, params);
        return build_forward(tape, p, config, make_sequence(r, r.size(), players, court), DropoutContext{});
    }
};

}  // namespace

TEST_CASE("full model matches central differences") {
    const auto r = st::model_gradient_check(3);
    INFO("worst parameter " << r.worst);
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("embedding mode contract") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto modified = st::check_mode_contract(EmbeddingMode::modified, seed);
        CHECK(modified.area_insensitive_to_player);
        CHECK(modified.keeps_negative);
        const auto baseline = st::check_mode_contract(EmbeddingMode::baseline, seed);
        CHECK_FALSE(baseline.area_insensitive_to_player);
        CHECK_FALSE(baseline.keeps_negative);
    }
}

TEST_CASE("a stroke never influences earlier positions") {
    Setup s(11);
    Rally changed = s.rally;
    changed.strokes[5].landing = {1.0, 12.0};
    changed.strokes[5].shot_type = 4;
    Tape t1(false), t2(false);
    const auto g1 = s.run(t1, s.rally);
    const auto g2 = s.run(t2, changed);
    for (std::size_t row = 0; row < 5; ++row) {
        CHECK(rows_equal(g1.heads.type_logits.value(), g2.heads.type_logits.value(), row));
        CHECK(rows_equal(g1.heads.area.value(), g2.heads.area.value(), row));
    }
    CHECK_FALSE(rows_equal(g1.heads.area.value(), g2.heads.area.value(), 5));
}

TEST_CASE("player context only attends to the same player's strokes") {
    Setup s(12);
    Rally changed = s.rally;
    changed.strokes[1].landing = {0.5, 7.0};  // a B stroke
    Tape t1(false), t2(false);
    const auto g1 = s.run(t1, s.rally);
    const auto g2 = s.run(t2, changed);
    for (std::size_t row = 0; row < s.rally.size(); ++row) {
        const bool a_stroke = row % 2 == 0;
        CHECK(rows_equal(g1.contexts.player.value(), g2.contexts.player.value(), row) == a_stroke);
    }
    // The rally context sees it from position 1 on.
    CHECK(rows_equal(g1.contexts.rally.value(), g2.contexts.rally.value(), 0));
    CHECK_FALSE(rows_equal(g1.contexts.rally.value(), g2.contexts.rally.value(), 2));
}

TEST_CASE("gated fusion") {
    ModelConfig c;
    c.embed_dim = 4;
    ModelParams params = ModelParams::zeros(c);
    Tape t(false);
    const Var rally = t.input(Array::matrix(2, 4, {1, 2, 3, 4, 5, 6, 7, 8}));
    const Var player = t.input(Array::matrix(2, 4, {-1, 0, 1, 2, 0, 0, 0, 0}));
    const Var pos = t.input(Array::matrix(2, 4, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}));

    SUBCASE("zero weights give the midpoint") {
        const ParamVars p(t, params);
        const Var f = fuse_contexts(rally, player, pos, p);
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(f.value()[i] == doctest::Approx((rally.value()[i] + player.value()[i]) / 2));
        }
    }
    SUBCASE("large positive bias selects the rally context") {
        for (double& b : params.at("fusion.bias").values()) b = 50;
        const ParamVars p(t, params);
        const Var f = fuse_contexts(rally, player, pos, p);
        for (std::size_t i = 0; i < 8; ++i) CHECK(f.value()[i] == doctest::Approx(rally.value()[i]).epsilon(1e-12));
    }
    SUBCASE("large negative bias selects the player context") {
        for (double& b : params.at("fusion.bias").values()) b = -50;
        const ParamVars p(t, params);
        const Var f = fuse_contexts(rally, player, pos, p);
        for (std::size_t i = 0; i < 8; ++i) CHECK(f.value()[i] == doctest::Approx(player.value()[i]).epsilon(1e-12));
    }
    SUBCASE("equal inputs pass through for any gate") {
        params = ModelParams::initialize(c, 4);
        const ParamVars p(t, params);
        const Var f = fuse_contexts(rally, rally, pos, p);
        for (std::size_t i = 0; i < 8; ++i) CHECK(f.value()[i] == rally.value()[i]);
    }
}

TEST_CASE("head outputs stay in range over 1,000 random draws") {
    Rng rng(21);
    Tape t(false);
    for (int i = 0; i < 1000; ++i) {
        const double scale = i < 500 ? 3.0 : 60.0;
        std::vector<double> logits(10), raw(5);
        for (double& v : logits) v = (rng.uniform() * 2 - 1) * scale;
        for (double& v : raw) v = (rng.uniform() * 2 - 1) * scale;
        HeadOutputs h{t.input(Array(Shape{1, 10}, logits)), t.input(Array(Shape{1, 5}, raw))};
        const PredictionStep s = decode_heads(h, 0).front();
        double total = 0;
        for (double p : s.type_probs) {
            CHECK(p >= 0.0);
            total += p;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.sigma_x > 0);
        CHECK(s.sigma_y > 0);
        CHECK(s.sigma_x <= std::exp(kLogSigmaBound));
        CHECK(s.sigma_y >= std::exp(-kLogSigmaBound));
        CHECK(std::fabs(s.rho) <= kRhoBound);
        CHECK(std::fabs(s.rho) < 1.0);
    }
}

TEST_CASE("teacher-forced predictions cover strokes tau+1..n") {
    Setup s(5, 9);
    const auto steps = forward_teacher_forced(s.rally, s.params, s.config, s.players, s.court);
    CHECK(steps.size() == 5);
    const Rally short_rally = st::random_rally(1, 4, s.vocab);
    CHECK_THROWS_AS(forward_teacher_forced(short_rally, s.params, s.config, s.players, s.court), InputError);
}

TEST_CASE("unknown players use the reserved row") {
    const PlayerIndex idx(std::vector<std::string>{"x", "y"});
    CHECK(idx.row("x") == 0);
    CHECK(idx.row("nobody") == idx.unknown_row());
    CHECK(idx.unknown_row() == 2);
}

TEST_CASE("checkpoint round trip is bit exact") {
    Forecaster m;
    m.config.n_players = 3;
    m.config.embedding_mode = EmbeddingMode::baseline;
    m.config.dropout_rate = 0.1;
    m.players = PlayerIndex(std::vector<std::string>{"ann", "ben", "cy"});
    m.params = ModelParams::initialize(m.config, 9);
    std::stringstream first;
    save_checkpoint(first, m);
    const Forecaster back = load_checkpoint(first);
    CHECK(back.config == m.config);
    CHECK(back.players == m.players);
    CHECK(back.vocab == m.vocab);
    CHECK(back.court == m.court);
    CHECK(back.params == m.params);
    std::stringstream second;
    save_checkpoint(second, back);
    CHECK(second.str() == first.str());
}

TEST_CASE("corrupt checkpoints are rejected") {
    std::istringstream empty("");
    CHECK_THROWS(load_checkpoint(empty));
    Forecaster m;
    m.params = ModelParams::initialize(m.config, 1);
    std::stringstream s;
    save_checkpoint(s, m);
    std::string text = s.str();
    text = text.substr(0, text.size() / 2);
    std::istringstream cut(text);
    CHECK_THROWS(load_checkpoint(cut));
}

TEST_CASE("parameter shapes depend on the mode only through names and sizes") {
    ModelConfig c;
    c.n_players = 4;
    const auto shapes = parameter_shapes(c);
    CHECK(shapes.at("embed.player") == Shape{5, 16});
    CHECK(shapes.at("fusion.weight") == Shape{48, 16});
    CHECK(shapes.at("head.area.weight") == Shape{16, 5});
    ModelParams p = ModelParams::initialize(c, 0);
    CHECK_NOTHROW(p.check_shapes(c));
    c.embed_dim = 8;
    CHECK_THROWS_AS(p.check_shapes(c), ConfigError);
}
