#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "strokecast/model.hpp"
#include "strokecast/numerics.hpp"

namespace strokecast {

struct TrainConfig {
    int epochs = 300;
    int batch_size = 16;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 5.0;  // global L2 norm; <= 0 disables clipping
    int eval_every = 50;     // epochs; 0 disables periodic evaluation
    std::size_t eval_samples = 100;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    void validate() const;
};

struct LossTerms {
    double shot = 0.0;
    double area = 0.0;
    double total = 0.0;
};

/// Mean CE of the true type plus mean bivariate-Gaussian NLL of the true
/// normalized landing point. A true-type probability below 1e-12 is clamped
/// and counted in `clamped`.
LossTerms step_loss(std::span<const PredictionStep> predictions, std::span<const Stroke> targets,
                    const CourtSpec& court, std::size_t* clamped = nullptr);

double gaussian_nll(const PredictionStep& step, Point target);

// Summed (not averaged) loss terms of one rally, recorded on the tape.
struct RallyLoss {
    Var shot;
    Var area;
    std::size_t steps = 0;
};

RallyLoss rally_loss(const Rally& rally, const ParamVars& p, const ModelConfig& config, const PlayerIndex& players,
                     const CourtSpec& court, const DropoutContext& dropout);

// Mean teacher-forced losses over a corpus in eval mode (no dropout).
LossTerms evaluate_teacher_forced(const Forecaster& model, std::span<const Rally> rallies);

struct EpochRecord {
    int epoch = 0;
    double shot_loss = 0.0;
    double area_loss = 0.0;
    double total_loss = 0.0;
    std::optional<double> val_score;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::optional<int> best_epoch;
    double wall_seconds = 0.0;
    std::string checkpoint_path;
};

// `epoch,shot_loss,area_loss,total_loss,val_score`, one line per epoch.
void write_train_report(std::ostream& out, const TrainReport& report);

struct BestOfKReport {
    double score = 0.0;               // sum over rallies of the best summed loss / n_strokes
    std::vector<double> rally_best;   // best summed loss per scored rally
    std::vector<std::size_t> best_sample;
    std::size_t n_strokes = 0;
};

/// k stochastic generations per rally, keeping each rally's closest one.
/// Sample j uses sample_stream(seed, rally, j), so smaller k is a prefix of larger k.
BestOfKReport eval_best_of_k(const Forecaster& model, std::span<const Rally> rallies, std::size_t k,
                             std::uint64_t seed, std::size_t jobs = 1);

struct TrainResult {
    Forecaster model;
    TrainReport report;
};

/// Teacher-forced mini-batch training with Adam. When evaluation runs, the
/// returned parameters are those of the best-scoring evaluated epoch.
TrainResult train(std::span<const Rally> train_set, std::span<const Rally> val_set, ModelConfig model_config,
                  const TrainConfig& config, const ShotTypeVocab& vocab, const CourtSpec& court = {},
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace strokecast
