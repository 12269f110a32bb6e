#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "strokecast/csv.hpp"
#include "strokecast/rng.hpp"
#include "strokecast/trainer.hpp"

namespace strokecast::testing {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

int random_non_serve(Rng& rng, const ShotTypeVocab& vocab) {
    for (;;) {
        const int t = static_cast<int>(rng.below(static_cast<std::size_t>(vocab.size())));
        if (!vocab.is_serve(t)) return t;
    }
}

int random_serve(Rng& rng, const ShotTypeVocab& vocab) {
    const auto serves = vocab.serve_ids();
    return serves[rng.below(serves.size())];
}

}  // namespace

ScoringFixture random_scoring_fixture(std::uint64_t seed, const ShotTypeVocab& vocab) {
    Rng rng(seed);
    const CourtSpec court;
    ScoringFixture fx;
    const std::size_t n_rallies = 1 + rng.below(4);
    for (std::size_t r = 0; r < n_rallies; ++r) {
        const std::string rally_id = "r" + std::to_string(r);
        const int length = 5 + static_cast<int>(rng.below(6));
        PredictedRally pred{"m/" + rally_id, {}};
        for (int round = 1; round <= length; ++round) {
            RawRow row;
            row.match_id = "m";
            row.rally_id = rally_id;
            row.round = round;
            row.player = round % 2 == 1 ? 'A' : 'B';
            row.type = round == 1 ? random_serve(rng, vocab) : random_non_serve(rng, vocab);
            const double half = court.length_m / 2;
            // Hitter stands on their own half, the shuttle lands on the other.
            const bool a = row.player == 'A';
            row.land_x = csv::canonical6(uniform(rng, 0, court.width_m));
            row.land_y = csv::canonical6(a ? uniform(rng, half, court.length_m) : uniform(rng, 0, half));
            row.loc_x = csv::canonical6(uniform(rng, 0, court.width_m));
            row.loc_y = csv::canonical6(a ? uniform(rng, 0, half) : uniform(rng, half, court.length_m));
            fx.truth.push_back(row);

            if (round <= kObservedStrokes) continue;
            PredictedStroke s;
            s.ball_round = round;
            s.landing = {uniform(rng, -1, court.width_m + 1), uniform(rng, -1, court.length_m + 1)};
            s.type_probs.resize(static_cast<std::size_t>(vocab.size()));
            double total = 0;
            for (double& p : s.type_probs) total += (p = rng.uniform());
            for (double& p : s.type_probs) p /= total;
            if (rng.uniform() < 0.2) s.type_probs[static_cast<std::size_t>(row.type)] = 1e-15;
            pred.strokes.push_back(std::move(s));
        }
        fx.predictions.push_back(std::move(pred));
    }
    return fx;
}

std::string truth_csv(const std::vector<RawRow>& rows, const ShotTypeVocab& vocab) {
    std::ostringstream out;
    out << "match_id,rally_id,ball_round,player,type,landing_x,landing_y,player_location_x,player_location_y\n";
    for (const RawRow& r : rows) {
        out << r.match_id << ',' << r.rally_id << ',' << r.round << ',' << r.player << ',' << vocab.name(r.type) << ','
            << csv::fixed6(r.land_x) << ',' << csv::fixed6(r.land_y) << ',' << csv::fixed6(r.loc_x) << ','
            << csv::fixed6(r.loc_y) << '\n';
    }
    return out.str();
}

double brute_force_set_loss(const ScoringFixture& fx) {
    double total = 0;
    int count = 0;
    for (const RawRow& row : fx.truth) {
        if (row.round <= kObservedStrokes) continue;
        const std::string key = row.match_id + "/" + row.rally_id;
        const PredictedStroke* found = nullptr;
        for (const auto& rally : fx.predictions) {
            if (rally.rally_key != key) continue;
            for (const auto& s : rally.strokes) {
                if (s.ball_round == row.round) found = &s;
            }
        }
        if (found == nullptr) return std::nan("");
        const double p = found->type_probs[static_cast<std::size_t>(row.type)];
        total += -std::log(p < 1e-12 ? 1e-12 : p);
        total += std::fabs(found->landing.x - row.land_x) + std::fabs(found->landing.y - row.land_y);
        ++count;
    }
    return total / count;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    double diff = 0, scale = 1e-8;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::fabs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::fabs(analytic[i]), std::fabs(numeric[i])});
    }
    return diff / scale;
}

namespace {

double weighted_value(const Array& out, const Array& w) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
}

Array random_array(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
    Array a(std::move(shape));
    for (double& v : a.values()) v = uniform(rng, lo, hi);
    return a;
}

// Values bounded away from zero, either sign.
Array away_from_zero(Rng& rng, Shape shape, double lo, double hi) {
    Array a(std::move(shape));
    for (double& v : a.values()) v = (rng.uniform() < 0.5 ? -1 : 1) * uniform(rng, lo, hi);
    return a;
}

std::size_t dim(Rng& rng, std::size_t max) { return 1 + rng.below(max); }

}  // namespace

GradReport check_gradients(const OpFn& f, const std::vector<Array>& inputs, std::uint64_t seed, double eps) {
    Tape tape;
    std::vector<Var> vars;
    for (const Array& a : inputs) vars.push_back(tape.input(a));
    const Var out = f(vars);
    Rng rng(seed ^ 0x5eedULL);
    const Array w = random_array(rng, out.shape());
    const Var loss = ad::sum(ad::mul(out, tape.input(w)));
    tape.backward(loss);

    GradReport report;
    std::vector<Array> probe = inputs;
    auto eval = [&]() {
        Tape t(false);
        std::vector<Var> v;
        for (const Array& a : probe) v.push_back(t.input(a));
        return weighted_value(f(v).value(), w);
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Array& analytic = tape.grad(vars[i].id());
        std::vector<double> numeric(inputs[i].size());
        for (std::size_t k = 0; k < inputs[i].size(); ++k) {
            const double x = inputs[i][k];
            probe[i][k] = x + eps;
            const double up = eval();
            probe[i][k] = x - eps;
            const double down = eval();
            probe[i][k] = x;
            numeric[k] = (up - down) / (2 * eps);
        }
        const double err = relative_error(analytic.values(), numeric);
        if (err >= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst = "input " + std::to_string(i);
        }
    }
    return report;
}

std::vector<OpCase> primitive_cases() {
    using Inputs = std::vector<Array>;
    using Made = std::pair<OpFn, Inputs>;
    std::vector<OpCase> cases;
    auto add_case = [&](std::string name, std::function<Made(Rng&)> make) {
        cases.push_back({std::move(name), [make](std::uint64_t seed) {
                             Rng rng(seed);
                             return make(rng);
                         }});
    };

    auto binary = [&](std::string name, Var (*op)(Var, Var), bool positive_rhs) {
        add_case(name, [op, positive_rhs](Rng& rng) {
            const Shape s{dim(rng, 4), dim(rng, 5)};
            Array b = positive_rhs ? away_from_zero(rng, s, 0.5, 2.0) : random_array(rng, s);
            return Made{[op](std::span<const Var> v) { return op(v[0], v[1]); }, Inputs{random_array(rng, s), b}};
        });
        add_case(name + "_broadcast", [op, positive_rhs](Rng& rng) {
            const std::size_t cols = dim(rng, 5);
            const Shape s{dim(rng, 3), dim(rng, 4), cols};
            Array b = positive_rhs ? away_from_zero(rng, {cols}, 0.5, 2.0) : random_array(rng, {cols});
            return Made{[op](std::span<const Var> v) { return op(v[0], v[1]); }, Inputs{random_array(rng, s), b}};
        });
    };
    binary("add", ad::add, false);
    binary("sub", ad::sub, false);
    binary("mul", ad::mul, false);
    binary("div", ad::div, true);

    add_case("scale", [](Rng& rng) {
        const double c = uniform(rng, -3, 3);
        return Made{[c](std::span<const Var> v) { return ad::scale(v[0], c); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)})}};
    });
    add_case("add_scalar", [](Rng& rng) {
        const double c = uniform(rng, -3, 3);
        return Made{[c](std::span<const Var> v) { return ad::add_scalar(v[0], c); },
                    Inputs{random_array(rng, {dim(rng, 6)})}};
    });
    add_case("square", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::square(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)})}};
    });
    add_case("matmul_2d", [](Rng& rng) {
        const std::size_t m = dim(rng, 4), k = dim(rng, 4), n = dim(rng, 4);
        return Made{[](std::span<const Var> v) { return ad::matmul(v[0], v[1]); },
                    Inputs{random_array(rng, {m, k}), random_array(rng, {k, n})}};
    });
    add_case("matmul_batched", [](Rng& rng) {
        const std::size_t b = dim(rng, 3), m = dim(rng, 4), k = dim(rng, 4), n = dim(rng, 4);
        return Made{[](std::span<const Var> v) { return ad::matmul(v[0], v[1]); },
                    Inputs{random_array(rng, {b, m, k}), random_array(rng, {b, k, n})}};
    });
    add_case("matmul_shared", [](Rng& rng) {
        const std::size_t b = dim(rng, 3), m = dim(rng, 4), k = dim(rng, 4), n = dim(rng, 4);
        return Made{[](std::span<const Var> v) { return ad::matmul(v[0], v[1]); },
                    Inputs{random_array(rng, {b, m, k}), random_array(rng, {k, n})}};
    });
    add_case("transpose", [](Rng& rng) {
        Shape s = rng.uniform() < 0.5 ? Shape{dim(rng, 4), dim(rng, 4)} : Shape{dim(rng, 3), dim(rng, 4), dim(rng, 4)};
        return Made{[](std::span<const Var> v) { return ad::transpose(v[0]); }, Inputs{random_array(rng, s)}};
    });
    add_case("concat", [](Rng& rng) {
        const std::size_t axis = rng.below(2);
        const std::size_t other = dim(rng, 4);
        Inputs in;
        const std::size_t parts = 1 + rng.below(3);
        for (std::size_t i = 0; i < parts; ++i) {
            in.push_back(random_array(rng, axis == 0 ? Shape{dim(rng, 3), other} : Shape{other, dim(rng, 3)}));
        }
        return Made{[axis](std::span<const Var> v) { return ad::concat(v, axis); }, in};
    });
    add_case("slice", [](Rng& rng) {
        const Shape s{dim(rng, 4) + 1, dim(rng, 5) + 1};
        const std::size_t axis = rng.below(2);
        const std::size_t b = rng.below(s[axis]);
        const std::size_t e = b + 1 + rng.below(s[axis] - b);
        return Made{[=](std::span<const Var> v) { return ad::slice(v[0], axis, b, e); }, Inputs{random_array(rng, s)}};
    });
    add_case("embedding_lookup", [](Rng& rng) {
        const std::size_t rows = dim(rng, 5), d = dim(rng, 4);
        std::vector<int> ids(dim(rng, 6));
        for (int& id : ids) id = static_cast<int>(rng.below(rows));
        return Made{[ids](std::span<const Var> v) { return ad::embedding_lookup(v[0], ids); },
                    Inputs{random_array(rng, {rows, d})}};
    });
    add_case("pick", [](Rng& rng) {
        const std::size_t n = dim(rng, 5), cols = dim(rng, 5);
        std::vector<int> idx(n);
        for (int& i : idx) i = static_cast<int>(rng.below(cols));
        return Made{[idx](std::span<const Var> v) { return ad::pick(v[0], idx); }, Inputs{random_array(rng, {n, cols})}};
    });
    for (const bool log_space : {false, true}) {
        add_case(log_space ? "log_softmax" : "softmax", [log_space](Rng& rng) {
            const Shape s = rng.uniform() < 0.5 ? Shape{dim(rng, 4), dim(rng, 5)}
                                                : Shape{dim(rng, 3), dim(rng, 4), dim(rng, 5)};
            const std::size_t axis = rng.below(s.size());
            return Made{[=](std::span<const Var> v) {
                            return log_space ? ad::log_softmax(v[0], axis) : ad::softmax(v[0], axis);
                        },
                        Inputs{random_array(rng, s, -3, 3)}};
        });
    }
    add_case("sigmoid", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::sigmoid(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)}, -4, 4)}};
    });
    add_case("tanh", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::tanh(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)}, -3, 3)}};
    });
    add_case("relu", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::relu(v[0]); },
                    Inputs{away_from_zero(rng, {dim(rng, 4), dim(rng, 4)}, 0.01, 2)}};
    });
    add_case("exp", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::exp(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)}, -2, 2)}};
    });
    add_case("log", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::log(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)}, 0.2, 3)}};
    });
    add_case("sum", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::sum(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 3), dim(rng, 4), dim(rng, 4)})}};
    });
    add_case("mean", [](Rng& rng) {
        return Made{[](std::span<const Var> v) { return ad::mean(v[0]); },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 4)})}};
    });
    add_case("layer_norm", [](Rng& rng) {
        // Width 2 normalizes every row to about +-1, leaving a gradient too small to difference.
        const std::size_t d = 3 + rng.below(4);
        const Shape s = rng.uniform() < 0.5 ? Shape{dim(rng, 4), d} : Shape{dim(rng, 3), dim(rng, 3), d};
        return Made{[](std::span<const Var> v) { return ad::layer_norm(v[0], v[1], v[2]); },
                    Inputs{random_array(rng, s, -2, 2), random_array(rng, {d}, 0.5, 1.5), random_array(rng, {d})}};
    });
    add_case("dropout", [](Rng& rng) {
        const std::uint64_t mask_seed = rng.next_u64();
        const double rate = uniform(rng, 0.1, 0.6);
        return Made{[=](std::span<const Var> v) {
                        Rng r(mask_seed);  // same mask on every evaluation
                        return ad::dropout(v[0], rate, r, true);
                    },
                    Inputs{random_array(rng, {dim(rng, 4), dim(rng, 5)})}};
    });
    add_case("masked_fill", [](Rng& rng) {
        const Shape s{dim(rng, 4), dim(rng, 5)};
        std::vector<std::uint8_t> mask(shape_size(s));
        for (auto& m : mask) m = rng.uniform() < 0.4 ? 1 : 0;
        const double fill = uniform(rng, -5, 5);
        return Made{[=](std::span<const Var> v) { return ad::masked_fill(v[0], mask, fill); },
                    Inputs{random_array(rng, s)}};
    });
    return cases;
}

GradReport check_all_primitives(int trials) {
    GradReport worst;
    for (const OpCase& c : primitive_cases()) {
        for (int t = 0; t < trials; ++t) {
            const std::uint64_t seed = splitmix64(std::hash<std::string>{}(c.name) + static_cast<std::uint64_t>(t));
            auto [fn, inputs] = c.make(seed);
            const GradReport r = check_gradients(fn, inputs, seed);
            if (r.max_rel_error >= worst.max_rel_error) {
                worst.max_rel_error = r.max_rel_error;
                worst.worst = c.name + " trial " + std::to_string(t) + " " + r.worst;
            }
        }
    }
    return worst;
}

Rally random_rally(std::uint64_t seed, std::size_t length, const ShotTypeVocab& vocab, const std::string& key) {
    Rng rng(seed);
    const CourtSpec court;
    Rally r;
    r.match_id = "m";
    r.rally_id = key;
    r.player_a = "alice";
    r.player_b = "bob";
    for (std::size_t i = 0; i < length; ++i) {
        Stroke s;
        s.round_index = static_cast<int>(i) + 1;
        s.player = hitter_of_round(s.round_index);
        s.shot_type = i == 0 ? random_serve(rng, vocab) : random_non_serve(rng, vocab);
        s.landing = {uniform(rng, 0, court.width_m), uniform(rng, court.length_m / 2, court.length_m)};
        s.player_location = {uniform(rng, 0, court.width_m), uniform(rng, 0, court.length_m / 2)};
        r.strokes.push_back(s);
    }
    return r;
}

GradReport model_gradient_check(std::uint64_t seed) {
    const ShotTypeVocab vocab({{"serve", true}, {"a", false}, {"b", false}, {"c", false}});
    ModelConfig config;
    config.embed_dim = 4;
    config.n_heads = 2;
    config.ffn_dim = 8;
    config.vocab_size = 4;
    config.n_players = 2;
    config.dropout_rate = 0.0;
    const CourtSpec court;
    const Rally rally = random_rally(seed, 5, vocab);
    const PlayerIndex players = PlayerIndex::from_rallies(std::span<const Rally>(&rally, 1));
    ModelParams params = ModelParams::initialize(config, seed);
    // Non-zero biases and embeddings everywhere so no gradient is trivially zero.
    Rng rng(seed + 1);
    for (auto& [name, a] : params.arrays()) {
        for (double& v : a.values()) v += 0.1 * uniform(rng, -1, 1);
    }

    auto loss_of = [&](const ModelParams& ps, Tape& tape) {
        const ParamVars p(tape, ps);
        const RallyLoss l = rally_loss(rally, p, config, players, court, DropoutContext{});
        return std::pair{ad::add(l.shot, l.area), p};
    };

    Tape tape;
    auto [loss, vars] = loss_of(params, tape);
    tape.backward(loss);

    GradReport report;
    const double eps = 1e-5;
    ModelParams probe = params;
    for (auto& [name, array] : probe.arrays()) {
        const Array& analytic = tape.grad(vars[name].id());
        std::vector<double> numeric(array.size());
        for (std::size_t k = 0; k < array.size(); ++k) {
            const double x = array[k];
            array[k] = x + eps;
            Tape up_tape(false);
            const double up = loss_of(probe, up_tape).first.value().item();
            array[k] = x - eps;
            Tape down_tape(false);
            const double down = loss_of(probe, down_tape).first.value().item();
            array[k] = x;
            numeric[k] = (up - down) / (2 * eps);
        }
        const double err = relative_error(analytic.values(), numeric);
        if (err >= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst = name;
        }
    }
    return report;
}

ModeContract check_mode_contract(EmbeddingMode mode, std::uint64_t seed) {
    const ShotTypeVocab vocab = ShotTypeVocab::default_vocab();
    ModelConfig config;
    config.n_players = 2;
    config.embedding_mode = mode;
    const CourtSpec court;
    const Rally rally = random_rally(seed, 8, vocab);
    const PlayerIndex players = PlayerIndex::from_rallies(std::span<const Rally>(&rally, 1));
    const StrokeSequence seq = make_sequence(rally, rally.size(), players, court);

    ModelParams params = ModelParams::initialize(config, seed);
    auto area_of = [&](const ModelParams& ps) {
        Tape tape(false);
        const ParamVars p(tape, ps);
        const EmbeddedStrokes e = embed_strokes(tape, p, config, seq);
        Array a = e.area.value();
        const Array& pe = e.position.value();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] -= pe[i];
        return a;
    };

    ModeContract c;
    ModelParams perturbed = params;
    Rng rng(seed + 7);
    for (double& v : perturbed.at("embed.player").values()) v += uniform(rng, -1, 1);
    const Array before = area_of(params);
    const Array after = area_of(perturbed);
    c.area_insensitive_to_player =
        std::equal(before.values().begin(), before.values().end(), after.values().begin(),
                   [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });

    // With the player table zeroed only the coordinate projections remain.
    ModelParams no_player = params;
    for (double& v : no_player.at("embed.player").values()) v = 0.0;
    const Array coords_only = area_of(no_player);
    c.keeps_negative = std::any_of(coords_only.values().begin(), coords_only.values().end(),
                                   [](double v) { return v < 0.0; });
    return c;
}

}  // namespace strokecast::testing
