// strokecast command-line entry point.
//
// Every subcommand accepts `--config FILE`, a flat `key = value` file whose
// keys are the subcommand's long flag names. Flags given on the command line
// win over the file; unknown keys are an error.
//
// Exit codes: 0 ok, 1 runtime or numeric failure, 2 configuration or usage.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "strokecast/analysis.hpp"
#include "strokecast/dataset.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/model.hpp"
#include "strokecast/sampler.hpp"
#include "strokecast/scoring.hpp"
#include "strokecast/trainer.hpp"

#ifndef STROKECAST_VERSION
#define STROKECAST_VERSION "0.0.0"
#endif
#ifndef STROKECAST_BUILD_TYPE
#define STROKECAST_BUILD_TYPE "unknown"
#endif

namespace fs = std::filesystem;
using namespace strokecast;

namespace {

struct CommonOptions {
    std::string vocab_path;
    CourtSpec court;

    ShotTypeVocab vocab() const {
        return vocab_path.empty() ? ShotTypeVocab::default_vocab() : ShotTypeVocab::load(vocab_path);
    }
};

void add_common(CLI::App* sub, CommonOptions& o) {
    sub->add_option("--config", "Flat key = value file of option defaults");
    sub->add_option("--vocab", o.vocab_path, "Shot-type vocabulary CSV (name,is_serve)");
    sub->add_option("--court-width", o.court.width_m, "Court width in meters");
    sub->add_option("--court-length", o.court.length_m, "Court length in meters");
    sub->add_option("--norm-mean-x", o.court.mean_x);
    sub->add_option("--norm-mean-y", o.court.mean_y);
    sub->add_option("--norm-std-x", o.court.std_x);
    sub->add_option("--norm-std-y", o.court.std_y);
}

struct TrainOptions {
    std::string data;
    std::string val_data;
    std::optional<double> train_fraction;
    bool split_by_match = false;
    ModelConfig model;
    TrainConfig train;
    std::size_t max_rally_length = 35;
    std::size_t max_match_rounds = 300;
    std::size_t min_rally_length = kObservedStrokes + 1;
    std::string embedding_mode = "modified";
};

void add_training(CLI::App* sub, TrainOptions& o) {
    sub->add_option("--data", o.data, "Training rallies CSV")->required();
    sub->add_option("--val-data", o.val_data, "Validation rallies CSV");
    sub->add_option("--train-fraction", o.train_fraction, "Split --data into train/validation (0,1)");
    sub->add_flag("--split-by-match", o.split_by_match, "Split whole matches instead of rallies");
    sub->add_option("--embed-dim", o.model.embed_dim);
    sub->add_option("--heads", o.model.n_heads);
    sub->add_option("--layers", o.model.n_layers);
    sub->add_option("--ffn-dim", o.model.ffn_dim);
    sub->add_option("--dropout", o.model.dropout_rate);
    sub->add_option("--embedding-mode", o.embedding_mode)->check(CLI::IsMember({"baseline", "modified"}));
    sub->add_option("--epochs", o.train.epochs);
    sub->add_option("--batch-size", o.train.batch_size);
    sub->add_option("--learning-rate", o.train.learning_rate);
    sub->add_option("--grad-clip", o.train.grad_clip, "Global gradient norm limit, <= 0 disables");
    sub->add_option("--eval-every", o.train.eval_every, "Epochs between best-of-k evaluations, 0 disables");
    sub->add_option("--eval-samples", o.train.eval_samples);
    sub->add_option("--seed", o.train.seed);
    sub->add_option("--jobs", o.train.jobs, "Worker threads for evaluation");
    sub->add_option("--max-rally-length", o.max_rally_length, "0 disables");
    sub->add_option("--max-match-rounds", o.max_match_rounds, "0 disables");
    sub->add_option("--min-rally-length", o.min_rally_length);
}

std::vector<Rally> load_rallies(const std::string& path, const ShotTypeVocab& vocab, const CourtSpec& court) {
    ParseResult parsed = parse_dataset(path, vocab, court);
    if (!parsed.rejects.empty()) {
        std::cerr << "warning: " << parsed.rejects.size() << " row(s) rejected in " << path << '\n';
    }
    return std::move(parsed.rallies);
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    body(out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

struct PreparedData {
    std::vector<Rally> train;
    std::vector<Rally> validation;
};

PreparedData prepare(TrainOptions& o, const ShotTypeVocab& vocab, const CourtSpec& court) {
    o.model.embedding_mode = parse_embedding_mode(o.embedding_mode);
    FilterPolicy policy;
    policy.max_rally_length = o.max_rally_length ? std::optional(o.max_rally_length) : std::nullopt;
    policy.max_match_total_rounds = o.max_match_rounds ? std::optional(o.max_match_rounds) : std::nullopt;
    policy.min_rally_length = o.min_rally_length;

    auto filtered = filter_training(load_rallies(o.data, vocab, court), policy);
    if (!filtered.dropped.empty()) std::cerr << "filtered out " << filtered.dropped.size() << " rally(s)\n";
    PreparedData d;
    if (o.train_fraction) {
        if (!o.val_data.empty()) throw ConfigError("--train-fraction and --val-data are mutually exclusive");
        auto s = split(filtered.kept, *o.train_fraction, o.train.seed, o.split_by_match);
        for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
        d.train = std::move(s.train);
        d.validation = std::move(s.validation);
    } else {
        d.train = std::move(filtered.kept);
        if (!o.val_data.empty()) d.validation = load_rallies(o.val_data, vocab, court);
    }
    if (d.train.empty()) throw InputError("no training rallies left after filtering");
    return d;
}

TrainResult run_training(const PreparedData& d, const TrainOptions& o, const ShotTypeVocab& vocab,
                         const CourtSpec& court, bool verbose) {
    ModelConfig mc = o.model;
    mc.vocab_size = vocab.size();
    return train(d.train, d.validation, mc, o.train, vocab, court, [&](const EpochRecord& e) {
        if (!verbose) return;
        std::printf("epoch %d shot %.6f area %.6f total %.6f", e.epoch, e.shot_loss, e.area_loss, e.total_loss);
        if (e.val_score) std::printf(" score %.6f", *e.val_score);
        std::printf("\n");
        std::fflush(stdout);
    });
}

int cmd_synth(const CommonOptions& c, const SynthConfig& base, std::size_t n_players, const std::string& out) {
    c.court.validate();
    const ShotTypeVocab vocab = c.vocab();
    SynthConfig cfg = base;
    cfg.player_styles = default_player_styles(vocab, c.court, n_players);
    const auto rallies = synthesize_dataset(cfg, vocab, c.court);
    write_dataset(out, rallies, vocab, c.court);
    std::printf("wrote %zu rallies to %s\n", rallies.size(), out.c_str());
    return 0;
}

int cmd_validate(const CommonOptions& c, const std::string& data, bool lenient_serve) {
    const ShotTypeVocab vocab = c.vocab();
    ParseResult parsed = parse_dataset(data, vocab, c.court);
    std::size_t violations = 0;
    for (const Rally& r : parsed.rallies) {
        for (const Violation& v : validate_rally(r, vocab, !lenient_serve)) {
            ++violations;
            std::printf("%s stroke %zu: %s\n", r.key().c_str(), v.stroke_index, v.rule.c_str());
        }
    }
    if (!parsed.rejects.empty()) {
        const std::string path = data + ".rejects.csv";
        write_rejects(path, parsed.rejects);
        std::printf("rejected rows written to %s\n", path.c_str());
    }
    const auto& m = parsed.meta;
    std::printf("matches %zu rallies %zu players %zu\n", m.n_matches, m.n_rallies, m.n_players);
    std::printf("rejected rows %zu\nviolations %zu\n", parsed.rejects.size(), violations);
    return violations == 0 && parsed.rejects.empty() ? 0 : 1;
}

int cmd_train(const CommonOptions& c, TrainOptions& o, const std::string& out, std::string report_path) {
    c.court.validate();
    const ShotTypeVocab vocab = c.vocab();
    const PreparedData d = prepare(o, vocab, c.court);
    std::printf("training on %zu rallies, validating on %zu\n", d.train.size(), d.validation.size());
    auto result = run_training(d, o, vocab, c.court, true);
    save_checkpoint(out, result.model);
    if (report_path.empty()) report_path = out + ".report.csv";
    write_file(report_path, [&](std::ostream& s) { write_train_report(s, result.report); });
    if (result.report.best_epoch) std::printf("best epoch %d\n", *result.report.best_epoch);
    std::printf("checkpoint %s\nreport %s\n", out.c_str(), report_path.c_str());
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, std::size_t samples, std::uint64_t seed,
                 std::size_t jobs) {
    const Forecaster model = load_checkpoint(checkpoint);
    const auto rallies = load_rallies(data, model.vocab, model.court);
    const LossTerms tf = evaluate_teacher_forced(model, rallies);
    const BestOfKReport best = eval_best_of_k(model, rallies, samples, seed, jobs);
    std::printf("shot_loss %.9f\narea_loss %.9f\ntotal_loss %.9f\n", tf.shot, tf.area, tf.total);
    std::printf("best_of_%zu_score %.9f\npredicted_strokes %zu\n", samples, best.score, best.n_strokes);
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data, std::size_t samples, std::uint64_t seed,
                std::size_t jobs, const std::string& out) {
    const Forecaster model = load_checkpoint(checkpoint);
    const auto rallies = load_rallies(data, model.vocab, model.court);
    const PredictionFile file = generate_predictions(model, rallies, samples, seed, jobs);
    write_predictions(out, file);
    std::printf("wrote %zu sample set(s) for %zu rallies to %s\n", file.sets.size(),
                file.sets.empty() ? std::size_t{0} : file.sets.front().size(), out.c_str());
    return 0;
}

int cmd_score(const CommonOptions& c, const std::string& predictions, const std::string& truth,
              const std::string& out) {
    const ShotTypeVocab vocab = c.vocab();
    const PredictionFile file = read_predictions(predictions, vocab);
    if (file.sets.size() != kScoredSampleSets) {
        throw InputError("expected 6 sample sets, got " + std::to_string(file.sets.size()));
    }
    const auto rallies = load_rallies(truth, vocab, c.court);
    const ScoreReport report = score_predictions(file, rallies, c.court);
    for (std::size_t i = 0; i < report.set_losses.size(); ++i) std::printf("l_%zu %.9f\n", i + 1, report.set_losses[i]);
    std::printf("Score %.9f\n", report.score);
    if (report.clamped) std::fprintf(stderr, "warning: %zu probability(ies) clamped at 1e-12\n", report.clamped);
    if (!out.empty()) write_file(out, [&](std::ostream& s) { write_score_report(s, report); });
    return 0;
}

std::string analysis_path(const std::string& dir, const std::string& kind, const std::string& grouping) {
    return (fs::path(dir) / ("analysis_" + kind + "_" + grouping + ".csv")).string();
}

int cmd_analyze(const CommonOptions& c, const std::string& kind, const std::string& data,
                const std::string& predictions, const std::string& out_dir) {
    const ShotTypeVocab vocab = c.vocab();
    fs::create_directories(out_dir);
    auto need_data = [&]() {
        if (data.empty()) throw ConfigError("--kind " + kind + " needs --data");
        return load_rallies(data, vocab, c.court);
    };
    auto need_predictions = [&]() {
        if (predictions.empty()) throw ConfigError("--kind " + kind + " needs --predictions");
        return read_predictions(predictions, vocab);
    };
    std::string path;
    if (kind.rfind("shot-by-", 0) == 0) {
        const std::string g = kind.substr(8);
        const Grouping grouping = g == "round"           ? Grouping::ball_round
                                  : g == "player"        ? Grouping::player
                                  : g == "landing-zone"  ? Grouping::landing_zone
                                                         : Grouping::player_location_zone;
        const auto rallies = need_data();
        const auto table = shot_distribution(rallies, grouping, vocab, c.court);
        path = analysis_path(out_dir, "shot", to_string(grouping));
        write_file(path, [&](std::ostream& s) { write_distribution(s, table); });
    } else if (kind == "vote") {
        const auto file = need_predictions();
        const auto votes = predicted_type_vote(file);
        path = analysis_path(out_dir, "vote", "stroke");
        write_file(path, [&](std::ostream& s) { write_votes(s, votes, file.type_names); });
        const std::string dist = analysis_path(out_dir, "vote", "all");
        write_file(dist, [&](std::ostream& s) { write_distribution(s, votes.distribution); });
        std::printf("%s\n", dist.c_str());
    } else if (kind == "zones") {
        const auto file = need_predictions();
        const auto hist = landing_zone_distribution(file, c.court);
        path = analysis_path(out_dir, "zones", "landing");
        write_file(path, [&](std::ostream& s) { write_zone_histogram(s, hist); });
    } else if (kind == "trend") {
        const auto file = need_predictions();
        const auto trend = round_trend(file);
        path = analysis_path(out_dir, "trend", "round");
        write_file(path, [&](std::ostream& s) { write_round_trend(s, trend); });
    } else if (kind == "probability") {
        const auto file = need_predictions();
        const auto probs = mean_type_probability(file);
        path = analysis_path(out_dir, "probability", "all");
        write_file(path, [&](std::ostream& s) { write_type_probability(s, file.type_names, probs); });
    } else {
        throw ConfigError("unknown analysis kind: " + kind);
    }
    std::printf("%s\n", path.c_str());
    return 0;
}

// Trains both embedding modes on the same data and writes one round-trend
// table per mode from predictions on the training rallies.
int cmd_compare(const CommonOptions& c, TrainOptions& o, std::size_t samples, const std::string& out_dir) {
    c.court.validate();
    const ShotTypeVocab vocab = c.vocab();
    fs::create_directories(out_dir);
    const PreparedData d = prepare(o, vocab, c.court);
    for (const EmbeddingMode mode : {EmbeddingMode::baseline, EmbeddingMode::modified}) {
        const std::string name = to_string(mode);
        TrainOptions mo = o;
        mo.model.embedding_mode = mode;
        auto result = run_training(d, mo, vocab, c.court, false);
        const std::string ckpt = (fs::path(out_dir) / ("model_" + name + ".ckpt")).string();
        save_checkpoint(ckpt, result.model);
        const auto& eval_set = d.validation.empty() ? d.train : d.validation;
        const PredictionFile file = generate_predictions(result.model, eval_set, samples, o.train.seed + 1,
                                                         o.train.jobs);
        const std::string pred = (fs::path(out_dir) / ("predictions_" + name + ".csv")).string();
        write_predictions(pred, file);
        const std::string trend = analysis_path(out_dir, "trend", "round_" + name);
        write_file(trend, [&](std::ostream& s) { write_round_trend(s, round_trend(file)); });
        const auto& last = result.report.epochs.back();
        std::printf("%s: final shot %.6f area %.6f", name.c_str(), last.shot_loss, last.area_loss);
        if (file.sets.size() == kScoredSampleSets) {
            std::printf(" Score %.6f", score_predictions(file, eval_set, c.court).score);
        }
        std::printf("\n  %s\n", trend.c_str());
    }
    return 0;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Reads `key = value` lines ('#' starts a comment) into `--key=value` flags.
std::vector<std::string> config_args(const std::string& path, const CLI::App& sub) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::vector<std::string> args;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key == "config" || sub.get_option_no_throw("--" + key) == nullptr) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "' for " +
                              sub.get_name());
        }
        args.push_back("--" + key + "=" + value);
    }
    return args;
}

// Splices the subcommand's config file in front of its command-line flags.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) return args;
    const CLI::App* sub = nullptr;
    for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) {
        if (s->get_name() == args.front()) sub = s;
    }
    if (sub == nullptr) return args;
    std::optional<std::string> path;
    std::vector<std::string> rest;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!path) return args;
    std::vector<std::string> out{args.front()};
    for (auto& a : config_args(*path, *sub)) out.push_back(std::move(a));
    for (auto& a : rest) out.push_back(std::move(a));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Badminton stroke forecasting: synthesize, train, predict, score and analyze", "strokecast"};
    app.require_subcommand(1);
    // Config-file values come first, so a repeated flag means the command line wins.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", std::string("strokecast ") + STROKECAST_VERSION + " (" +
                                          STROKECAST_BUILD_TYPE + ", " + __VERSION__ + ", C++" +
                                          std::to_string(__cplusplus) + ")");

    CommonOptions common;
    std::function<int()> action;

    auto* synth = app.add_subcommand("synth", "Write a synthetic rally corpus");
    add_common(synth, common);
    SynthConfig synth_cfg;
    std::size_t synth_players = 4;
    std::string synth_out;
    synth->add_option("--n", synth_cfg.n_rallies, "Number of rallies");
    synth->add_option("--seed", synth_cfg.seed);
    synth->add_option("--mean-length", synth_cfg.mean_length);
    synth->add_option("--rallies-per-match", synth_cfg.rallies_per_match);
    synth->add_option("--players", synth_players, "Number of synthetic players");
    synth->add_option("--location-noise", synth_cfg.location_noise, "Std-dev of player position, meters");
    synth->add_option("--out", synth_out)->required();
    synth->callback([&] { action = [&] { return cmd_synth(common, synth_cfg, synth_players, synth_out); }; });

    auto* validate = app.add_subcommand("validate", "Parse a rally CSV and report rule violations");
    add_common(validate, common);
    std::string validate_data;
    bool lenient_serve = false;
    validate->add_option("--data", validate_data)->required();
    validate->add_flag("--lenient-serve", lenient_serve, "Allow serve types after round 1");
    validate->callback([&] { action = [&] { return cmd_validate(common, validate_data, lenient_serve); }; });

    auto* train_cmd = app.add_subcommand("train", "Train a forecaster and write a checkpoint");
    add_common(train_cmd, common);
    TrainOptions train_opts;
    std::string train_out, train_report;
    add_training(train_cmd, train_opts);
    train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
    train_cmd->add_option("--report", train_report, "Per-epoch CSV (default <out>.report.csv)");
    train_cmd->callback([&] { action = [&] { return cmd_train(common, train_opts, train_out, train_report); }; });

    std::string ckpt, data, out;
    std::size_t samples = kScoredSampleSets;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    auto* evaluate = app.add_subcommand("evaluate", "Teacher-forced losses and best-of-k score of a checkpoint");
    add_common(evaluate, common);
    evaluate->add_option("--checkpoint", ckpt)->required();
    evaluate->add_option("--data", data)->required();
    evaluate->add_option("--samples", samples, "k for best-of-k");
    evaluate->add_option("--seed", seed);
    evaluate->add_option("--jobs", jobs);
    evaluate->callback([&] { action = [&] { return cmd_evaluate(ckpt, data, samples, seed, jobs); }; });

    auto* predict = app.add_subcommand("predict", "Generate sample sets of rally continuations");
    add_common(predict, common);
    predict->add_option("--checkpoint", ckpt)->required();
    predict->add_option("--data", data)->required();
    predict->add_option("--samples", samples);
    predict->add_option("--seed", seed);
    predict->add_option("--jobs", jobs);
    predict->add_option("--out", out)->required();
    predict->callback([&] { action = [&] { return cmd_predict(ckpt, data, samples, seed, jobs, out); }; });

    auto* score = app.add_subcommand("score", "Score a six-sample prediction file against ground truth");
    add_common(score, common);
    std::string predictions;
    score->add_option("--predictions", predictions)->required();
    score->add_option("--truth", data)->required();
    score->add_option("--out", out, "Score report CSV");
    score->callback([&] { action = [&] { return cmd_score(common, predictions, data, out); }; });

    auto* analyze = app.add_subcommand("analyze", "Shot, zone and trend tables");
    add_common(analyze, common);
    std::string kind, out_dir = ".";
    analyze->add_option("--kind", kind)
        ->required()
        ->check(CLI::IsMember({"shot-by-round", "shot-by-player", "shot-by-landing-zone", "shot-by-location-zone",
                               "vote", "zones", "trend", "probability"}));
    analyze->add_option("--data", data);
    analyze->add_option("--predictions", predictions);
    analyze->add_option("--out-dir", out_dir);
    analyze->callback([&] { action = [&] { return cmd_analyze(common, kind, data, predictions, out_dir); }; });

    auto* compare = app.add_subcommand("compare", "Train both embedding modes and emit round-trend tables");
    add_common(compare, common);
    TrainOptions compare_opts;
    add_training(compare, compare_opts);
    compare->add_option("--samples", samples);
    compare->add_option("--out-dir", out_dir);
    compare->callback([&] { action = [&] { return cmd_compare(common, compare_opts, samples, out_dir); }; });

    try {
        auto args = expand_config(app, argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return action();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
