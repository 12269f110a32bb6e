#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strokecast/court.hpp"

namespace strokecast {

struct DatasetMeta {
    std::size_t n_matches = 0;
    std::size_t n_rallies = 0;
    std::size_t n_players = 0;
    std::map<std::string, std::size_t> strokes_per_player;
    std::map<std::size_t, std::size_t> rally_length_histogram;

    static DatasetMeta compute(const std::vector<Rally>& rallies);
};

struct RejectedRow {
    std::size_t line = 0;  // 1-based line number in the input file
    std::string raw;
    std::string reason;
};

struct ParseResult {
    std::vector<Rally> rallies;
    DatasetMeta meta;
    std::vector<RejectedRow> rejects;
};

inline constexpr const char* kDatasetHeader =
    "match_id,rally_id,ball_round,player,type,landing_x,landing_y,player_location_x,player_location_y";

// Above this fraction of malformed rows the whole parse fails.
inline constexpr double kMaxMalformedFraction = 0.10;

/// Parses a rally CSV (court-frame coordinates) into canonical-frame rallies.
/// Bad rows are collected in `rejects`; whole rallies with a round gap or a
/// duplicated round are rejected row by row. Throws InputError if the file is
/// missing, the header is wrong, or more than 10% of rows are malformed.
ParseResult parse_dataset(const std::string& path, const ShotTypeVocab& vocab, const CourtSpec& court = {});
ParseResult parse_dataset(std::istream& in, const ShotTypeVocab& vocab, const CourtSpec& court = {});

/// Canonical output: header, rallies in order, strokes by round, six decimals.
void write_dataset(std::ostream& out, const std::vector<Rally>& rallies, const ShotTypeVocab& vocab,
                   const CourtSpec& court = {});
void write_dataset(const std::string& path, const std::vector<Rally>& rallies, const ShotTypeVocab& vocab,
                   const CourtSpec& court = {});

// Optional sidecar naming the players of each match:
// `<dataset>.players.csv` with header `match_id,player_a,player_b`.
// Without it, players are named `<match_id>:A` and `<match_id>:B`.
using MatchPlayers = std::map<std::string, std::pair<std::string, std::string>>;
std::string players_sidecar_path(const std::string& dataset_path);
MatchPlayers read_player_names(std::istream& in);
void apply_player_names(std::vector<Rally>& rallies, const MatchPlayers& names);
std::string default_player_name(const std::string& match_id, Player p);
bool has_default_player_names(const std::vector<Rally>& rallies);

// `<input>.rejects.csv`: the dataset header plus a `reason` column.
void write_rejects(const std::string& path, const std::vector<RejectedRow>& rejects);

struct FilterPolicy {
    std::optional<std::size_t> max_rally_length = 35;
    std::optional<std::size_t> max_match_total_rounds = 300;
    std::size_t min_rally_length = kObservedStrokes + 1;

    void validate() const;
};

struct DroppedRally {
    std::string match_id;
    std::string rally_id;
    std::string reason;
};

struct FilterResult {
    std::vector<Rally> kept;
    std::vector<DroppedRally> dropped;
};

/// Drops whole matches whose summed stroke count exceeds the match threshold,
/// then single rallies outside [min_rally_length, max_rally_length].
FilterResult filter_training(const std::vector<Rally>& rallies, const FilterPolicy& policy);

struct SplitResult {
    std::vector<Rally> train;
    std::vector<Rally> validation;
    std::vector<std::string> warnings;
};

/// Seeded split; train gets ceil(train_fraction * n) units (rallies, or matches
/// when `by_match`). Both sides keep the input order.
SplitResult split(const std::vector<Rally>& rallies, double train_fraction, std::uint64_t seed, bool by_match = false);

// Shot preference and landing kernels of one synthetic player.
struct PlayerStyle {
    std::string name;
    std::vector<double> type_weights;  // size V, serves included
    struct Kernel {
        Point mean;                       // canonical frame, meters
        double cov_xx = 0.25, cov_xy = 0.0, cov_yy = 0.25;
    };
    std::vector<Kernel> landing;  // one per shot type
};

struct SynthConfig {
    std::size_t n_rallies = 100;
    double mean_length = 10.0;
    std::size_t rallies_per_match = 8;
    std::vector<PlayerStyle> player_styles;  // at least two
    std::uint64_t seed = 0;
    // Std-dev (meters) of the hitter's position around the previous landing spot.
    double location_noise = 0.3;
};

/// Deterministic planted-pattern styles: each player has two favourite shots
/// and a lateral bias in where they place the shuttle.
std::vector<PlayerStyle> default_player_styles(const ShotTypeVocab& vocab, const CourtSpec& court,
                                               std::size_t n_players);

/// Synthetic corpus: rallies open with a serve, serves never recur, players
/// alternate, lengths are 5 + geometric. Throws ConfigError on bad styles.
std::vector<Rally> synthesize_dataset(const SynthConfig& config, const ShotTypeVocab& vocab,
                                      const CourtSpec& court = {});

}  // namespace strokecast
