#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "strokecast/dataset.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/trainer.hpp"

using namespace strokecast;

namespace {

PredictionStep step_with(double p_true, int true_type, int vocab = 10) {
    PredictionStep s;
    s.type_probs.assign(static_cast<std::size_t>(vocab), (1.0 - p_true) / (vocab - 1));
    s.type_probs[static_cast<std::size_t>(true_type)] = p_true;
    return s;
}

Stroke target_at_mean(int type) {
    const CourtSpec c;
    Stroke s;
    s.shot_type = type;
    s.landing = {c.mean_x, c.mean_y};
    return s;
}

std::vector<Rally> fixture_corpus() {
    return parse_dataset(STROKECAST_FIXTURES "/synthetic32.csv", ShotTypeVocab::default_vocab()).rallies;
}

TrainConfig quick(int epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.eval_every = 0;
    c.learning_rate = 1e-2;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("step_loss worked examples") {
    const CourtSpec court;
    SUBCASE("perfect type, target at the mean of a unit Gaussian") {
        const PredictionStep s = step_with(1.0, 3);
        const Stroke t = target_at_mean(3);
        const auto l = step_loss(std::span(&s, 1), std::span(&t, 1), court);
        CHECK(l.shot == 0.0);
        CHECK(l.area == doctest::Approx(1.8379).epsilon(1e-4));
        CHECK(l.total == doctest::Approx(l.shot + l.area));
    }
    SUBCASE("true-type probability one half") {
        const PredictionStep s = step_with(0.5, 2);
        const Stroke t = target_at_mean(2);
        CHECK(step_loss(std::span(&s, 1), std::span(&t, 1), court).shot == doctest::Approx(0.6931).epsilon(1e-4));
    }
    SUBCASE("mean over two steps") {
        const std::vector<PredictionStep> s{step_with(0.5, 2), step_with(0.25, 4)};
        const std::vector<Stroke> t{target_at_mean(2), target_at_mean(4)};
        CHECK(step_loss(s, t, court).shot == doctest::Approx(1.0397).epsilon(1e-4));
    }
    SUBCASE("zero probability is clamped and counted") {
        const PredictionStep s = step_with(0.0, 1);
        const Stroke t = target_at_mean(1);
        std::size_t clamped = 0;
        const auto l = step_loss(std::span(&s, 1), std::span(&t, 1), court, &clamped);
        CHECK(clamped == 1);
        CHECK(l.shot == doctest::Approx(-std::log(1e-12)));
    }
    SUBCASE("length mismatch") {
        const std::vector<PredictionStep> s{step_with(0.5, 2)};
        const std::vector<Stroke> t{target_at_mean(2), target_at_mean(4)};
        CHECK_THROWS_AS(step_loss(s, t, court), InputError);
    }
}

TEST_CASE("tape loss agrees with the value-level loss") {
    const auto rallies = fixture_corpus();
    Forecaster m;
    m.players = PlayerIndex::from_rallies(rallies);
    m.config.n_players = m.players.size();
    m.params = ModelParams::initialize(m.config, 4);
    const Rally& r = rallies[3];
    Tape tape(false);
    const ParamVars p(tape, m.params);
    const RallyLoss l = rally_loss(r, p, m.config, m.players, m.court, DropoutContext{});
    const auto steps = forward_teacher_forced(r, m.params, m.config, m.players, m.court);
    const std::span<const Stroke> targets(r.strokes.data() + m.config.tau, steps.size());
    const LossTerms v = step_loss(steps, targets, m.court);
    const double n = static_cast<double>(steps.size());
    CHECK(l.shot.value().item() / n == doctest::Approx(v.shot).epsilon(1e-10));
    CHECK(l.area.value().item() / n == doctest::Approx(v.area).epsilon(1e-10));
}

TEST_CASE("zero learning rate leaves parameters at their initial values") {
    const auto rallies = fixture_corpus();
    TrainConfig c = quick(2);
    c.learning_rate = 0.0;
    const auto one = train(rallies, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab());
    ModelConfig mc = one.model.config;
    CHECK(one.model.params == ModelParams::initialize(mc, Rng(c.seed).split(0).seed()));
}

TEST_CASE("training is deterministic under a seed") {
    const auto rallies = fixture_corpus();
    const std::span<const Rally> some(rallies.data(), 8);
    TrainConfig c = quick(3);
    c.eval_every = 2;
    c.eval_samples = 3;
    const auto a = train(some, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab());
    const auto b = train(some, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab());
    CHECK(a.model.params == b.model.params);
    std::ostringstream ra, rb;
    write_train_report(ra, a.report);
    write_train_report(rb, b.report);
    CHECK(ra.str() == rb.str());
    c.seed = 4;
    const auto other = train(some, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab());
    CHECK_FALSE(other.model.params == a.model.params);
}

TEST_CASE("report has one line per epoch and a best epoch among evaluated ones") {
    const auto rallies = fixture_corpus();
    const std::span<const Rally> some(rallies.data(), 8);
    TrainConfig c = quick(5);
    c.eval_every = 2;
    c.eval_samples = 2;
    const auto r = train(some, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab());
    REQUIRE(r.report.epochs.size() == 5);
    CHECK(r.report.epochs[1].val_score.has_value());
    CHECK(r.report.epochs[4].val_score.has_value());  // last epoch always evaluated
    CHECK_FALSE(r.report.epochs[2].val_score.has_value());
    REQUIRE(r.report.best_epoch.has_value());
    double best = 1e300;
    int best_epoch = 0;
    for (const auto& e : r.report.epochs) {
        if (e.val_score && *e.val_score < best) {
            best = *e.val_score;
            best_epoch = e.epoch;
        }
    }
    CHECK(*r.report.best_epoch == best_epoch);
    std::ostringstream out;
    write_train_report(out, r.report);
    CHECK(out.str().rfind("epoch,shot_loss,area_loss,total_loss,val_score\n", 0) == 0);
}

TEST_CASE("total loss halves over 300 epochs on the fixture corpus") {
    const auto rallies = fixture_corpus();
    TrainConfig c = quick(300);
    const auto r = train(rallies, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab());
    CHECK(r.report.epochs.back().total_loss < 0.5 * r.report.epochs.front().total_loss);
}

TEST_CASE("bad configurations are rejected") {
    const auto rallies = fixture_corpus();
    TrainConfig c = quick(1);
    c.batch_size = 0;
    CHECK_THROWS_AS(train(rallies, {}, ModelConfig{}, c, ShotTypeVocab::default_vocab()), ConfigError);
    CHECK_THROWS_AS(train({}, {}, ModelConfig{}, quick(1), ShotTypeVocab::default_vocab()), InputError);
    ModelConfig odd;
    odd.n_heads = 3;  // does not divide 16
    CHECK_THROWS_AS(train(rallies, {}, odd, quick(1), ShotTypeVocab::default_vocab()), ConfigError);
}
