#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strokecast/court.hpp"
#include "strokecast/numerics.hpp"

namespace strokecast {

/// How player information enters the stroke embedding.
///   modified: shot channel = type + player id, area channel = landing + player
///             location, no activation on the area channel.
///   baseline: player id added to both channels, ReLU on the landing
///             projection, no player-location term.
enum class EmbeddingMode { baseline, modified };

std::string to_string(EmbeddingMode mode);
EmbeddingMode parse_embedding_mode(const std::string& text);

struct ModelConfig {
    int embed_dim = 16;
    int n_heads = 2;
    int n_layers = 1;
    int ffn_dim = 64;
    double dropout_rate = 0.2;
    int vocab_size = 10;
    int n_players = 0;  // known players; the table has one extra "unknown" row
    EmbeddingMode embedding_mode = EmbeddingMode::modified;
    int tau = kObservedStrokes;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named learnable arrays. Names are stable and double as checkpoint keys.
class ModelParams {
public:
    // Xavier-uniform matrices, N(0, 1/d) embeddings, unit layer-norm gains.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
    static ModelParams zeros(const ModelConfig& config);

    Array& at(const std::string& name);
    const Array& at(const std::string& name) const;
    bool contains(const std::string& name) const { return arrays_.count(name) != 0; }

    std::map<std::string, Array>& arrays() { return arrays_; }
    const std::map<std::string, Array>& arrays() const { return arrays_; }

    std::size_t parameter_count() const;
    // Throws ConfigError unless every array exists with the shape `config` implies.
    void check_shapes(const ModelConfig& config) const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    std::map<std::string, Array> arrays_;
};

// Shape of every parameter for a config.
std::map<std::string, Shape> parameter_shapes(const ModelConfig& config);

/// Dataset-global player numbering; row size() is the reserved unknown player.
class PlayerIndex {
public:
    PlayerIndex() = default;
    explicit PlayerIndex(std::vector<std::string> names);
    static PlayerIndex from_rallies(std::span<const Rally> rallies);

    int size() const { return static_cast<int>(names_.size()); }
    int unknown_row() const { return size(); }
    int row(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }

    friend bool operator==(const PlayerIndex&, const PlayerIndex&) = default;

private:
    std::vector<std::string> names_;
    std::map<std::string, int> rows_;
};

struct PredictionStep {
    std::vector<double> type_probs;
    // Normalized canonical court units.
    double mu_x = 0.0;
    double mu_y = 0.0;
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double rho = 0.0;
};

// Model-ready view of the first `count` strokes of a rally.
struct StrokeSequence {
    std::vector<int> types;
    std::vector<int> player_ids;
    std::vector<Player> hitters;
    std::vector<Point> landing;   // normalized, canonical
    std::vector<Point> location;  // normalized, canonical
    std::vector<int> rounds;
    // Player-table row of whoever hits the stroke after position k.
    std::vector<int> next_player_ids;

    std::size_t size() const { return types.size(); }
};

StrokeSequence make_sequence(const Rally& rally, std::size_t count, const PlayerIndex& players,
                             const CourtSpec& court);

// Parameters bound as tape inputs for one forward pass.
class ParamVars {
public:
    ParamVars(Tape& tape, const ModelParams& params);
    Var operator[](const std::string& name) const;
    const std::map<std::string, Var>& vars() const { return vars_; }
    Tape& tape() const { return *tape_; }

private:
    Tape* tape_;
    std::map<std::string, Var> vars_;
};

// Dropout state threaded through a forward pass; rng is null in eval mode.
struct DropoutContext {
    double rate = 0.0;
    Rng* rng = nullptr;

    bool training() const { return rng != nullptr && rate > 0.0; }
    Var apply(Var x) const;
};

// Fixed sinusoidal encoding of 1-based round indices, [count, d].
Array positional_encoding(std::span<const int> rounds, int d);

struct EmbeddedStrokes {
    Var shot;      // e^s, [m, d]
    Var area;      // e^a, [m, d]
    Var position;  // positional encoding, [m, d]
};

EmbeddedStrokes embed_strokes(Tape& tape, const ParamVars& p, const ModelConfig& config, const StrokeSequence& seq);

struct Contexts {
    Var rally;   // causal attention over all strokes
    Var player;  // causal attention over the same player's strokes
};

/// Both streams run through the same encoder weights; they differ only in
/// the attention mask.
Contexts encode_contexts(const EmbeddedStrokes& embedded, std::span<const Player> hitters, const ParamVars& p,
                         const ModelConfig& config, const DropoutContext& dropout);

/// g = sigmoid([rally | player | position] W + b); fused = g*rally + (1-g)*player.
Var fuse_contexts(Var rally, Var player, Var position, const ParamVars& p);

struct HeadOutputs {
    Var type_logits;  // [m, V]
    Var area;         // [m, 5]: mu_x, mu_y, log-sigma_x, log-sigma_y, rho (raw)
};

// `next_player` holds player-table rows of the hitter being predicted.
HeadOutputs apply_heads(Var fused, std::span<const int> next_player, const ParamVars& p,
                        const DropoutContext& dropout);

/// Raw area-head outputs mapped to Gaussian parameters. These are also the
/// tape ops the training loss uses.
struct GaussianVars {
    Var mu_x, mu_y, log_sigma_x, log_sigma_y, rho;
};
GaussianVars gaussian_params(Var area_raw);

// Bounded log-sigma keeps sigma in [e^-7, e^7]; identity near zero.
inline constexpr double kLogSigmaBound = 7.0;
// |rho| stays below this.
inline constexpr double kRhoBound = 0.995;

std::vector<PredictionStep> decode_heads(const HeadOutputs& heads, std::size_t first_row);

/// Head stage for one fused vector (inference helper, no tape).
PredictionStep predict_step(std::span<const double> fused, int next_player_row, const ModelParams& params);

struct ForwardGraph {
    EmbeddedStrokes embedded;
    Contexts contexts;
    Var fused;
    HeadOutputs heads;
};

ForwardGraph build_forward(Tape& tape, const ParamVars& p, const ModelConfig& config, const StrokeSequence& seq,
                           const DropoutContext& dropout);

/// Teacher-forced predictions for strokes tau+1..|r|; the step for stroke n
/// only sees strokes 1..n-1. Dropout is active iff `dropout_rng` is given.
std::vector<PredictionStep> forward_teacher_forced(const Rally& rally, const ModelParams& params,
                                                   const ModelConfig& config, const PlayerIndex& players,
                                                   const CourtSpec& court, Rng* dropout_rng = nullptr);

/// Everything needed to run a trained model; persisted as a checkpoint.
struct Forecaster {
    ModelConfig config;
    ShotTypeVocab vocab = ShotTypeVocab::default_vocab();
    PlayerIndex players;
    CourtSpec court;
    ModelParams params;
};

/// Text container: header, config, vocabulary, players, court, then each
/// array as `array <name> <rank> <dims...>` followed by hex-float values.
void save_checkpoint(std::ostream& out, const Forecaster& model);
void save_checkpoint(const std::string& path, const Forecaster& model);
Forecaster load_checkpoint(std::istream& in);
Forecaster load_checkpoint(const std::string& path);

}  // namespace strokecast
