#include "strokecast/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "strokecast/csv.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/sampler.hpp"
#include "strokecast/scoring.hpp"

namespace strokecast {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
    if (eval_samples < 1) throw ConfigError("eval_samples must be at least 1");
}

double gaussian_nll(const PredictionStep& s, Point target) {
    const double dx = (target.x - s.mu_x) / s.sigma_x;
    const double dy = (target.y - s.mu_y) / s.sigma_y;
    const double one_minus = 1.0 - s.rho * s.rho;
    const double z = dx * dx + dy * dy - 2.0 * s.rho * dx * dy;
    return kLog2Pi + std::log(s.sigma_x) + std::log(s.sigma_y) + 0.5 * std::log(one_minus) + z / (2.0 * one_minus);
}

LossTerms step_loss(std::span<const PredictionStep> predictions, std::span<const Stroke> targets,
                    const CourtSpec& court, std::size_t* clamped) {
    if (predictions.size() != targets.size() || predictions.empty()) {
        throw InputError("step_loss: need equal, non-zero numbers of predictions and targets");
    }
    LossTerms out;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& probs = predictions[i].type_probs;
        const auto t = static_cast<std::size_t>(targets[i].shot_type);
        if (t >= probs.size()) throw InputError("step_loss: target type outside the probability vector");
        double p = probs[t];
        if (!(p >= kMinProbability)) {
            p = kMinProbability;
            if (clamped) ++*clamped;
        }
        out.shot -= std::log(p);
        out.area += gaussian_nll(predictions[i], normalize_coord(targets[i].landing, court));
    }
    const double n = static_cast<double>(predictions.size());
    out.shot /= n;
    out.area /= n;
    out.total = out.shot + out.area;
    return out;
}

RallyLoss rally_loss(const Rally& rally, const ParamVars& p, const ModelConfig& config, const PlayerIndex& players,
                     const CourtSpec& court, const DropoutContext& dropout) {
    const auto tau = static_cast<std::size_t>(config.tau);
    if (rally.size() < tau + 1) throw InputError("rally " + rally.key() + " is too short to train on");
    Tape& tape = p.tape();
    const StrokeSequence seq = make_sequence(rally, rally.size() - 1, players, court);
    const ForwardGraph g = build_forward(tape, p, config, seq, dropout);
    const std::size_t m = seq.size();
    const std::size_t n = m - (tau - 1);

    std::vector<int> targets;
    Array tx(Shape{n, 1});
    Array ty(Shape{n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        const Stroke& s = rally.strokes[tau + i];
        targets.push_back(s.shot_type);
        const Point t = normalize_coord(s.landing, court);
        tx[i] = t.x;
        ty[i] = t.y;
    }
    const Var logits = ad::slice(g.heads.type_logits, 0, tau - 1, m);
    const Var shot = ad::scale(ad::sum(ad::pick(ad::log_softmax(logits, 1), targets)), -1.0);

    const GaussianVars gp = gaussian_params(ad::slice(g.heads.area, 0, tau - 1, m));
    const Var dx = ad::mul(ad::sub(tape.input(std::move(tx)), gp.mu_x), ad::exp(ad::scale(gp.log_sigma_x, -1.0)));
    const Var dy = ad::mul(ad::sub(tape.input(std::move(ty)), gp.mu_y), ad::exp(ad::scale(gp.log_sigma_y, -1.0)));
    const Var one_minus = ad::add_scalar(ad::scale(ad::square(gp.rho), -1.0), 1.0);
    const Var z = ad::sub(ad::add(ad::square(dx), ad::square(dy)), ad::scale(ad::mul(gp.rho, ad::mul(dx, dy)), 2.0));
    const Var nll = ad::add(ad::add(ad::add_scalar(ad::add(gp.log_sigma_x, gp.log_sigma_y), kLog2Pi),
                                    ad::scale(ad::log(one_minus), 0.5)),
                            ad::div(z, ad::scale(one_minus, 2.0)));
    return {shot, ad::sum(nll), n};
}

LossTerms evaluate_teacher_forced(const Forecaster& model, std::span<const Rally> rallies) {
    LossTerms sum;
    std::size_t steps = 0;
    for (const Rally& r : rallies) {
        if (r.size() <= static_cast<std::size_t>(model.config.tau)) continue;
        const auto preds = forward_teacher_forced(r, model.params, model.config, model.players, model.court);
        const auto targets = std::span<const Stroke>(r.strokes).subspan(static_cast<std::size_t>(model.config.tau));
        const LossTerms l = step_loss(preds, targets, model.court);
        const double n = static_cast<double>(preds.size());
        sum.shot += l.shot * n;
        sum.area += l.area * n;
        steps += preds.size();
    }
    if (steps == 0) throw InputError("no rally long enough to evaluate");
    sum.shot /= static_cast<double>(steps);
    sum.area /= static_cast<double>(steps);
    sum.total = sum.shot + sum.area;
    return sum;
}

void write_train_report(std::ostream& out, const TrainReport& report) {
    out << "epoch,shot_loss,area_loss,total_loss,val_score\n";
    for (const EpochRecord& e : report.epochs) {
        out << e.epoch << ',' << csv::exact(e.shot_loss) << ',' << csv::exact(e.area_loss) << ','
            << csv::exact(e.total_loss) << ',';
        if (e.val_score) out << csv::exact(*e.val_score);
        out << '\n';
    }
}

BestOfKReport eval_best_of_k(const Forecaster& model, std::span<const Rally> rallies, std::size_t k,
                             std::uint64_t seed, std::size_t jobs) {
    if (k < 1) throw InputError("best-of-k needs k >= 1");
    const auto tau = static_cast<std::size_t>(model.config.tau);
    std::vector<std::size_t> scored;
    for (std::size_t i = 0; i < rallies.size(); ++i) {
        if (rallies[i].size() > tau) scored.push_back(i);
    }
    if (scored.empty()) throw InputError("no rally long enough to evaluate");
    BestOfKReport report;
    report.rally_best.assign(scored.size(), 0.0);
    report.best_sample.assign(scored.size(), 0);
    parallel_for(scored.size(), jobs, [&](std::size_t slot) {
        const Rally& r = rallies[scored[slot]];
        double best = INFINITY;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const auto strokes = generate_suffix(model, r, r.size() - tau, sample_stream(seed, scored[slot], j));
            const SampleSet one{to_predicted(r, strokes, false)};
            const SampleSetLoss l = evaluate_sample_set(one, std::span<const Rally>(&r, 1), model.court, model.config.tau);
            double total = 0.0;
            for (const StrokeLoss& s : l.strokes) total += s.total();
            if (total < best) {
                best = total;
                best_j = j;
            }
        }
        report.rally_best[slot] = best;
        report.best_sample[slot] = best_j;
    });
    double total = 0.0;
    for (std::size_t slot = 0; slot < scored.size(); ++slot) {
        total += report.rally_best[slot];
        report.n_strokes += rallies[scored[slot]].size() - tau;
    }
    report.score = total / static_cast<double>(report.n_strokes);
    return report;
}

namespace {

struct AdamState {
    std::map<std::string, Array> m;
    std::map<std::string, Array> v;
    long step = 0;
};

}  // namespace

TrainResult train(std::span<const Rally> train_set, std::span<const Rally> val_set, ModelConfig model_config,
                  const TrainConfig& config, const ShotTypeVocab& vocab, const CourtSpec& court,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    court.validate();
    const auto start = std::chrono::steady_clock::now();
    if (train_set.empty()) throw InputError("training set is empty");
    for (const Rally& r : train_set) {
        if (r.size() < static_cast<std::size_t>(model_config.tau) + 1) {
            throw InputError("training rally " + r.key() + " is shorter than tau + 1");
        }
    }

    const Rng root(config.seed);
    Forecaster model;
    model.vocab = vocab;
    model.court = court;
    model.players = PlayerIndex::from_rallies(train_set);
    model_config.vocab_size = vocab.size();
    model_config.n_players = model.players.size();
    model_config.validate();
    model.config = model_config;
    model.params = ModelParams::initialize(model_config, root.split(0).seed());

    AdamState adam;
    for (const auto& [name, a] : model.params.arrays()) {
        adam.m.emplace(name, Array(a.shape(), 0.0));
        adam.v.emplace(name, Array(a.shape(), 0.0));
    }

    const std::span<const Rally> eval_set = val_set.empty() ? train_set : val_set;
    const std::uint64_t eval_seed = root.split(3).seed();
    std::optional<double> best_score;
    ModelParams best_params;

    TrainResult result;
    const std::size_t n = train_set.size();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::vector<std::size_t> order(n);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle = root.split(1).split(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double shot_sum = 0.0;
        double area_sum = 0.0;
        std::size_t step_count = 0;
        for (std::size_t b = 0, batch_index = 0; b < n; b += batch, ++batch_index) {
            const std::size_t e = std::min(n, b + batch);
            Rng dropout_rng = root.split(2).split(static_cast<std::uint64_t>(epoch)).split(batch_index);
            const DropoutContext dropout{model_config.dropout_rate, &dropout_rng};
            Tape tape;
            const ParamVars p(tape, model.params);
            try {
                std::vector<Var> shots, areas;
                std::size_t steps = 0;
                for (std::size_t i = b; i < e; ++i) {
                    const RallyLoss l = rally_loss(train_set[order[i]], p, model_config, model.players, court, dropout);
                    shots.push_back(l.shot);
                    areas.push_back(l.area);
                    steps += l.steps;
                }
                Var shot_sum_var = shots.front();
                Var area_sum_var = areas.front();
                for (std::size_t i = 1; i < shots.size(); ++i) {
                    shot_sum_var = ad::add(shot_sum_var, shots[i]);
                    area_sum_var = ad::add(area_sum_var, areas[i]);
                }
                const double inv = 1.0 / static_cast<double>(steps);
                const Var shot = ad::scale(shot_sum_var, inv);
                const Var area = ad::scale(area_sum_var, inv);
                const Var total = ad::add(shot, area);
                tape.backward(total);
                shot_sum += shot.value().item() * static_cast<double>(steps);
                area_sum += area.value().item() * static_cast<double>(steps);
                step_count += steps;
            } catch (const NumericError& err) {
                std::ostringstream msg;
                msg << "non-finite loss in epoch " << epoch << ", batch " << batch_index << " (rallies:";
                for (std::size_t i = b; i < e; ++i) msg << ' ' << train_set[order[i]].key();
                msg << "): " << err.what();
                throw NumericError(msg.str());
            }

            double norm2 = 0.0;
            for (const auto& [name, var] : p.vars()) {
                for (double g : var.grad().values()) norm2 += g * g;
            }
            const double norm = std::sqrt(norm2);
            const double clip = config.grad_clip > 0.0 && norm > config.grad_clip ? config.grad_clip / norm : 1.0;

            ++adam.step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
            for (auto& [name, param] : model.params.arrays()) {
                const Array& g = p[name].grad();
                Array& m = adam.m.at(name);
                Array& v = adam.v.at(name);
                for (std::size_t i = 0; i < param.size(); ++i) {
                    const double gi = g[i] * clip;
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
                    param[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
                }
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.shot_loss = shot_sum / static_cast<double>(step_count);
        record.area_loss = area_sum / static_cast<double>(step_count);
        record.total_loss = record.shot_loss + record.area_loss;
        if (!std::isfinite(record.total_loss)) throw NumericError("non-finite epoch loss at epoch " + std::to_string(epoch));

        const bool evaluate = config.eval_every > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs);
        if (evaluate) {
            record.val_score = eval_best_of_k(model, eval_set, config.eval_samples, eval_seed, config.jobs).score;
            if (!best_score || *record.val_score < *best_score) {
                best_score = record.val_score;
                best_params = model.params;
                result.report.best_epoch = epoch;
            }
        }
        result.report.epochs.push_back(record);
        if (on_epoch) on_epoch(record);
    }

    if (best_score) model.params = std::move(best_params);
    result.model = std::move(model);
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace strokecast
