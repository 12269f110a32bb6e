#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "strokecast/court.hpp"
#include "strokecast/scoring.hpp"

namespace strokecast {

enum class Grouping { ball_round, player, landing_zone, player_location_zone };

std::string to_string(Grouping g);
Grouping parse_grouping(const std::string& text);

struct DistributionRow {
    std::string key;
    std::string type_name;
    std::size_t count = 0;
    double fraction = 0.0;
};

/// Long-format table: for every key value with at least one stroke, one row
/// per shot type (zero counts included).
struct DistributionTable {
    std::string grouping;
    std::vector<DistributionRow> rows;
};

DistributionTable shot_distribution(std::span<const Rally> rallies, Grouping group_by, const ShotTypeVocab& vocab,
                                    const CourtSpec& court = {});

struct StrokeVote {
    std::string rally_key;
    int ball_round = 0;
    int winner = 0;
    std::vector<int> votes;  // per type, argmax votes across samples
};

struct VoteResult {
    std::vector<StrokeVote> strokes;
    DistributionTable distribution;  // share of strokes won by each type
};

/// Majority vote of per-sample argmax types; ties go to the larger summed
/// probability, then the lower type id.
VoteResult predicted_type_vote(const PredictionFile& file);

struct ZoneHistogram {
    std::array<std::size_t, kZoneCount> counts{};
    std::array<double, kZoneCount> fractions{};
    std::size_t total = 0;
};

ZoneHistogram zone_histogram(std::span<const Point> points, const CourtSpec& court, Player receiver_side);

/// Zones of every predicted landing, each judged on the receiving player's half.
ZoneHistogram landing_zone_distribution(const PredictionFile& file, const CourtSpec& court = {});

struct RoundTrend {
    std::vector<std::string> type_names;
    std::map<int, std::vector<double>> mean_probs;  // ball round -> mean distribution
    std::map<int, std::size_t> counts;
};

RoundTrend round_trend(const PredictionFile& file);

// Mean predicted probability of each type over every stroke and sample.
std::vector<double> mean_type_probability(const PredictionFile& file);

void write_distribution(std::ostream& out, const DistributionTable& table);
void write_votes(std::ostream& out, const VoteResult& votes, const std::vector<std::string>& type_names);
void write_zone_histogram(std::ostream& out, const ZoneHistogram& hist);
void write_round_trend(std::ostream& out, const RoundTrend& trend);
void write_type_probability(std::ostream& out, const std::vector<std::string>& type_names,
                            const std::vector<double>& probs);

}  // namespace strokecast
