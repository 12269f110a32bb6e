#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "strokecast/court.hpp"

namespace strokecast {

// One predicted future stroke as it appears in a prediction file.
struct PredictedStroke {
    int ball_round = 0;
    Point landing;  // court frame, meters
    std::vector<double> type_probs;

    friend bool operator==(const PredictedStroke&, const PredictedStroke&) = default;
};

struct PredictedRally {
    std::string rally_key;  // Rally::key()
    std::vector<PredictedStroke> strokes;

    friend bool operator==(const PredictedRally&, const PredictedRally&) = default;
};

// One stochastic generation for every rally.
using SampleSet = std::vector<PredictedRally>;

struct PredictionFile {
    std::vector<std::string> type_names;
    std::vector<SampleSet> sets;  // sets[j] is sample_id j+1

    friend bool operator==(const PredictionFile&, const PredictionFile&) = default;
};

inline constexpr double kMinProbability = 1e-12;
inline constexpr std::size_t kScoredSampleSets = 6;

struct StrokeLoss {
    std::string rally_key;
    int ball_round = 0;
    double cross_entropy = 0.0;  // -log p(true type), p clamped at 1e-12
    double abs_error = 0.0;      // |dx| + |dy| in meters
    bool clamped = false;

    double total() const { return cross_entropy + abs_error; }
};

struct SampleSetLoss {
    double loss = 0.0;  // sum of stroke losses / number of predicted strokes
    std::vector<StrokeLoss> strokes;
    std::size_t clamped = 0;
};

/// Per-stroke mean of CE at the true type plus L1 landing error, over every
/// stroke after the observed prefix of every rally. Throws InputError when a
/// rally's predictions do not line up with its ground truth.
SampleSetLoss evaluate_sample_set(const SampleSet& predictions, std::span<const Rally> truth, const CourtSpec& court,
                                  int tau = kObservedStrokes);

double sample_set_loss(const SampleSet& predictions, std::span<const Rally> truth, const CourtSpec& court,
                       int tau = kObservedStrokes);

/// Exact minimum of exactly six finite losses.
double score_min6(std::span<const double> losses);

struct ScoreReport {
    std::vector<double> set_losses;  // l_1..l_6
    double score = 0.0;
    std::size_t best_set = 0;  // 0-based
    std::size_t n_strokes = 0;
    std::size_t clamped = 0;
    // Best set only: each rally's summed loss / n_strokes, and mean loss per ball round.
    std::vector<std::pair<std::string, double>> per_rally;
    std::map<int, double> per_round;
};

ScoreReport score_predictions(const PredictionFile& file, std::span<const Rally> truth, const CourtSpec& court,
                              int tau = kObservedStrokes);

void write_score_report(std::ostream& out, const ScoreReport& report);

// Header column for a type, e.g. "prob_long_service".
std::string probability_column(const std::string& type_name);

/// Prediction CSV: `rally_id,sample_id,ball_round,landing_x,landing_y,prob_<type>...`,
/// six decimals, rows ordered by rally, then sample, then ball round.
void write_predictions(std::ostream& out, const PredictionFile& file);
void write_predictions(const std::string& path, const PredictionFile& file);
PredictionFile read_predictions(std::istream& in, const ShotTypeVocab& vocab);
PredictionFile read_predictions(const std::string& path, const ShotTypeVocab& vocab);

/// Rounds a stroke to what its CSV row parses back to. Probabilities are
/// rounded to multiples of 1e-6 that still sum to one (largest remainder).
PredictedStroke canonicalize(PredictedStroke stroke);

}  // namespace strokecast
