#include "strokecast/analysis.hpp"

#include <algorithm>
#include <ostream>

#include "strokecast/csv.hpp"
#include "strokecast/errors.hpp"

namespace strokecast {

std::string to_string(Grouping g) {
    switch (g) {
        case Grouping::ball_round: return "ball_round";
        case Grouping::player: return "player";
        case Grouping::landing_zone: return "landing_zone";
        case Grouping::player_location_zone: return "player_location_zone";
    }
    return "unknown";
}

Grouping parse_grouping(const std::string& text) {
    for (Grouping g : {Grouping::ball_round, Grouping::player, Grouping::landing_zone, Grouping::player_location_zone}) {
        if (to_string(g) == text) return g;
    }
    throw ConfigError("unknown grouping '" + text + "'");
}

DistributionTable shot_distribution(std::span<const Rally> rallies, Grouping group_by, const ShotTypeVocab& vocab,
                                    const CourtSpec& court) {
    const auto v = static_cast<std::size_t>(vocab.size());
    // Numeric keys sort numerically, player names lexically.
    std::map<std::pair<long, std::string>, std::vector<std::size_t>> counts;
    for (const Rally& r : rallies) {
        for (const Stroke& s : r.strokes) {
            std::pair<long, std::string> key{0, ""};
            switch (group_by) {
                case Grouping::ball_round: key.first = s.round_index; break;
                case Grouping::player: key.second = r.name_of(s.player); break;
                case Grouping::landing_zone: key.first = canonical_landing_zone(s.landing, court).value(); break;
                case Grouping::player_location_zone:
                    // Canonical hitters stand on the near half, i.e. A's side.
                    key.first = coord_to_zone(s.player_location, court, Player::A).value();
                    break;
            }
            auto& row = counts[key];
            row.resize(v, 0);
            ++row.at(static_cast<std::size_t>(s.shot_type));
        }
    }
    DistributionTable table;
    table.grouping = to_string(group_by);
    for (const auto& [key, row] : counts) {
        std::size_t total = 0;
        for (std::size_t c : row) total += c;
        const std::string label = group_by == Grouping::player ? key.second : std::to_string(key.first);
        for (std::size_t t = 0; t < v; ++t) {
            table.rows.push_back({label, vocab.name(static_cast<int>(t)), row[t],
                                  static_cast<double>(row[t]) / static_cast<double>(total)});
        }
    }
    return table;
}

VoteResult predicted_type_vote(const PredictionFile& file) {
    if (file.sets.empty()) throw InputError("vote needs at least one sample set");
    const std::size_t v = file.type_names.size();
    // (rally, round) -> per-sample probability vectors, in first-seen order.
    std::vector<std::pair<std::string, int>> order;
    std::map<std::pair<std::string, int>, std::vector<const std::vector<double>*>> samples;
    for (const SampleSet& set : file.sets) {
        for (const PredictedRally& r : set) {
            for (const PredictedStroke& s : r.strokes) {
                if (s.type_probs.size() != v) throw InputError("probability vector size mismatch");
                auto key = std::make_pair(r.rally_key, s.ball_round);
                auto& list = samples[key];
                if (list.empty()) order.push_back(key);
                list.push_back(&s.type_probs);
            }
        }
    }
    VoteResult result;
    std::vector<std::size_t> wins(v, 0);
    for (const auto& key : order) {
        StrokeVote vote{key.first, key.second, 0, std::vector<int>(v, 0)};
        std::vector<double> mass(v, 0.0);
        for (const auto* probs : samples[key]) {
            const auto top = std::max_element(probs->begin(), probs->end()) - probs->begin();
            ++vote.votes[static_cast<std::size_t>(top)];
            for (std::size_t t = 0; t < v; ++t) mass[t] += (*probs)[t];
        }
        std::size_t best = 0;
        for (std::size_t t = 1; t < v; ++t) {
            if (vote.votes[t] > vote.votes[best] || (vote.votes[t] == vote.votes[best] && mass[t] > mass[best])) best = t;
        }
        vote.winner = static_cast<int>(best);
        ++wins[best];
        result.strokes.push_back(std::move(vote));
    }
    result.distribution.grouping = "all";
    for (std::size_t t = 0; t < v; ++t) {
        result.distribution.rows.push_back({"all", file.type_names[t], wins[t],
                                            static_cast<double>(wins[t]) / static_cast<double>(order.size())});
    }
    return result;
}

namespace {

void finish(ZoneHistogram& h) {
    for (std::size_t z = 0; z < kZoneCount; ++z) {
        h.fractions[z] = h.total ? static_cast<double>(h.counts[z]) / static_cast<double>(h.total) : 0.0;
    }
}

}  // namespace

ZoneHistogram zone_histogram(std::span<const Point> points, const CourtSpec& court, Player receiver_side) {
    ZoneHistogram h;
    for (const Point& p : points) {
        ++h.counts[static_cast<std::size_t>(coord_to_zone(p, court, receiver_side).value() - 1)];
        ++h.total;
    }
    finish(h);
    return h;
}

ZoneHistogram landing_zone_distribution(const PredictionFile& file, const CourtSpec& court) {
    ZoneHistogram h;
    for (const SampleSet& set : file.sets) {
        for (const PredictedRally& r : set) {
            for (const PredictedStroke& s : r.strokes) {
                const Player receiver = other(hitter_of_round(s.ball_round));
                ++h.counts[static_cast<std::size_t>(coord_to_zone(s.landing, court, receiver).value() - 1)];
                ++h.total;
            }
        }
    }
    finish(h);
    return h;
}

RoundTrend round_trend(const PredictionFile& file) {
    RoundTrend trend;
    trend.type_names = file.type_names;
    const std::size_t v = file.type_names.size();
    for (const SampleSet& set : file.sets) {
        for (const PredictedRally& r : set) {
            for (const PredictedStroke& s : r.strokes) {
                if (s.type_probs.size() != v) throw InputError("probability vector size mismatch");
                auto& acc = trend.mean_probs[s.ball_round];
                acc.resize(v, 0.0);
                for (std::size_t t = 0; t < v; ++t) acc[t] += s.type_probs[t];
                ++trend.counts[s.ball_round];
            }
        }
    }
    for (auto& [round, acc] : trend.mean_probs) {
        for (double& p : acc) p /= static_cast<double>(trend.counts[round]);
    }
    return trend;
}

std::vector<double> mean_type_probability(const PredictionFile& file) {
    const std::size_t v = file.type_names.size();
    std::vector<double> acc(v, 0.0);
    std::size_t n = 0;
    for (const SampleSet& set : file.sets) {
        for (const PredictedRally& r : set) {
            for (const PredictedStroke& s : r.strokes) {
                for (std::size_t t = 0; t < v; ++t) acc[t] += s.type_probs.at(t);
                ++n;
            }
        }
    }
    if (n == 0) throw InputError("no predicted strokes");
    for (double& p : acc) p /= static_cast<double>(n);
    return acc;
}

void write_distribution(std::ostream& out, const DistributionTable& table) {
    out << table.grouping << ",type,count,fraction\n";
    for (const auto& row : table.rows) {
        out << row.key << ',' << row.type_name << ',' << row.count << ',' << csv::exact(row.fraction) << '\n';
    }
}

void write_votes(std::ostream& out, const VoteResult& votes, const std::vector<std::string>& type_names) {
    out << "rally_id,ball_round,winner,votes\n";
    for (const auto& s : votes.strokes) {
        out << s.rally_key << ',' << s.ball_round << ',' << type_names.at(static_cast<std::size_t>(s.winner)) << ','
            << s.votes[static_cast<std::size_t>(s.winner)] << '\n';
    }
}

void write_zone_histogram(std::ostream& out, const ZoneHistogram& hist) {
    out << "zone,count,fraction\n";
    for (std::size_t z = 0; z < kZoneCount; ++z) {
        out << (z + 1) << ',' << hist.counts[z] << ',' << csv::exact(hist.fractions[z]) << '\n';
    }
}

void write_round_trend(std::ostream& out, const RoundTrend& trend) {
    out << "ball_round,n";
    for (const auto& name : trend.type_names) out << ',' << probability_column(name);
    out << '\n';
    for (const auto& [round, probs] : trend.mean_probs) {
        out << round << ',' << trend.counts.at(round);
        for (double p : probs) out << ',' << csv::exact(p);
        out << '\n';
    }
}

void write_type_probability(std::ostream& out, const std::vector<std::string>& type_names,
                            const std::vector<double>& probs) {
    out << "type,mean_probability\n";
    for (std::size_t t = 0; t < type_names.size(); ++t) out << type_names[t] << ',' << csv::exact(probs.at(t)) << '\n';
}

}  // namespace strokecast
