#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "strokecast/model.hpp"
#include "strokecast/rng.hpp"
#include "strokecast/scoring.hpp"

namespace strokecast {

struct GeneratedStroke {
    int round_index = 0;
    Player hitter = Player::A;
    int shot_type = 0;
    Point landing;            // court frame, meters
    Point canonical_landing;  // canonical frame, meters
    std::vector<double> type_probs;  // unmasked model distribution
    PredictionStep step;
};

inline constexpr std::size_t kDefaultHorizon = 20;

/// Shot type drawn from `probs` with every serve type masked out.
int sample_rally_type(std::span<const double> probs, const ShotTypeVocab& vocab, Rng& rng);

/// Draw from the step's bivariate Gaussian (normalized units).
Point sample_landing(const PredictionStep& step, Rng& rng);

/// Stream for sample `sample` of rally `rally_index`; independent of how many
/// samples are drawn in total.
Rng sample_stream(std::uint64_t seed, std::size_t rally_index, std::size_t sample);

/// Autoregressive continuation of the first tau strokes of `rally` (only the
/// prefix and the player names are read). Each generated stroke is fed back
/// with its hitter standing where the previous shuttle landed.
std::vector<GeneratedStroke> generate_suffix(const Forecaster& model, const Rally& rally, std::size_t horizon,
                                             Rng rng);
std::vector<GeneratedStroke> generate_suffix(const Forecaster& model, const Rally& rally, std::size_t horizon,
                                             std::uint64_t seed);

PredictedRally to_predicted(const Rally& rally, std::span<const GeneratedStroke> strokes, bool canonical);

/// `samples` generations per rally with horizon |r| - tau, as a prediction
/// file. Canonical output equals what a written-then-read file would hold.
PredictionFile generate_predictions(const Forecaster& model, std::span<const Rally> rallies, std::size_t samples,
                                    std::uint64_t seed, std::size_t jobs = 1, bool canonical = true);

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace strokecast
