#include "strokecast/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "strokecast/csv.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/rng.hpp"

namespace strokecast {

DatasetMeta DatasetMeta::compute(const std::vector<Rally>& rallies) {
    DatasetMeta meta;
    std::set<std::string> matches;
    std::set<std::string> players;
    for (const Rally& r : rallies) {
        matches.insert(r.match_id);
        players.insert(r.player_a);
        players.insert(r.player_b);
        for (const Stroke& s : r.strokes) ++meta.strokes_per_player[r.name_of(s.player)];
        ++meta.rally_length_histogram[r.size()];
    }
    meta.n_matches = matches.size();
    meta.n_rallies = rallies.size();
    meta.n_players = players.size();
    return meta;
}

namespace {

struct Row {
    std::size_t line;
    std::string raw;
    std::string match_id;
    std::string rally_id;
    std::string player_name;
    Stroke stroke;
};

// Parses one data row; returns the reject reason on failure.
std::optional<std::string> parse_row(const std::string& raw, std::size_t line, const ShotTypeVocab& vocab,
                                     const CourtSpec& court, Row& out) {
    const auto f = csv::split(raw);
    if (f.size() != 9) return "expected 9 fields, found " + std::to_string(f.size());
    if (f[0].empty() || f[1].empty()) return std::string("empty match_id or rally_id");
    const auto round = csv::parse_int(f[2]);
    if (!round || *round < 1) return "bad ball_round '" + f[2] + "'";
    Player player;
    if (f[3] == "A" || f[3] == "a") {
        player = Player::A;
    } else if (f[3] == "B" || f[3] == "b") {
        player = Player::B;
    } else {
        return "bad player '" + f[3] + "'";
    }
    const auto type = vocab.find(f[4]);
    if (!type) return "unknown shot type '" + f[4] + "'";
    std::array<double, 4> coords{};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto v = csv::parse_double(f[5 + i]);
        if (!v) return "bad coordinate '" + f[5 + i] + "'";
        coords[i] = *v;
    }
    out.line = line;
    out.raw = raw;
    out.match_id = f[0];
    out.rally_id = f[1];
    out.stroke.round_index = static_cast<int>(*round);
    out.stroke.player = player;
    out.stroke.shot_type = *type;
    out.stroke.landing = to_canonical({coords[0], coords[1]}, player, court);
    out.stroke.player_location = to_canonical({coords[2], coords[3]}, player, court);
    return std::nullopt;
}

}  // namespace

ParseResult parse_dataset(const std::string& path, const ShotTypeVocab& vocab, const CourtSpec& court) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset: " + path);
    ParseResult result = parse_dataset(in, vocab, court);
    std::ifstream sidecar(players_sidecar_path(path));
    if (sidecar) {
        apply_player_names(result.rallies, read_player_names(sidecar));
        result.meta = DatasetMeta::compute(result.rallies);
    }
    return result;
}

std::string players_sidecar_path(const std::string& dataset_path) {
    return dataset_path + ".players.csv";
}

MatchPlayers read_player_names(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || csv::trim_cr(line) != "match_id,player_a,player_b") {
        throw InputError("player sidecar header must be 'match_id,player_a,player_b'");
    }
    MatchPlayers names;
    while (std::getline(in, line)) {
        line = csv::trim_cr(std::move(line));
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != 3 || f[1].empty() || f[2].empty()) throw InputError("bad player sidecar row: " + line);
        names[f[0]] = {f[1], f[2]};
    }
    return names;
}

void apply_player_names(std::vector<Rally>& rallies, const MatchPlayers& names) {
    for (Rally& r : rallies) {
        const auto it = names.find(r.match_id);
        if (it == names.end()) continue;
        r.player_a = it->second.first;
        r.player_b = it->second.second;
    }
}

bool has_default_player_names(const std::vector<Rally>& rallies) {
    return std::all_of(rallies.begin(), rallies.end(), [](const Rally& r) {
        return r.player_a == default_player_name(r.match_id, Player::A) &&
               r.player_b == default_player_name(r.match_id, Player::B);
    });
}

std::string default_player_name(const std::string& match_id, Player p) {
    return match_id + ":" + to_char(p);
}

ParseResult parse_dataset(std::istream& in, const ShotTypeVocab& vocab, const CourtSpec& court) {
    court.validate();
    std::string line;
    if (!std::getline(in, line)) throw InputError("dataset is empty");
    if (csv::trim_cr(line) != kDatasetHeader) {
        throw InputError(std::string("dataset header mismatch; expected: ") + kDatasetHeader);
    }

    ParseResult result;
    std::vector<Row> rows;
    std::size_t lineno = 1;
    std::size_t data_rows = 0;
    std::size_t malformed = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = csv::trim_cr(std::move(line));
        if (line.empty()) continue;
        ++data_rows;
        Row row;
        if (auto reason = parse_row(line, lineno, vocab, court, row)) {
            ++malformed;
            result.rejects.push_back({lineno, line, *reason});
        } else {
            rows.push_back(std::move(row));
        }
    }
    if (data_rows > 0 && static_cast<double>(malformed) > kMaxMalformedFraction * static_cast<double>(data_rows)) {
        std::ostringstream msg;
        msg << malformed << " of " << data_rows << " rows are malformed (limit 10%); first offending lines:";
        for (std::size_t i = 0; i < std::min<std::size_t>(20, result.rejects.size()); ++i) {
            msg << "\n  line " << result.rejects[i].line << ": " << result.rejects[i].reason;
        }
        throw InputError(msg.str());
    }

    // Group by (match_id, rally_id), first appearance order.
    std::vector<std::vector<Row>> groups;
    std::unordered_map<std::string, std::size_t> index;
    for (Row& row : rows) {
        const std::string key = row.match_id + '\x1f' + row.rally_id;
        auto [it, inserted] = index.emplace(key, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(std::move(row));
    }

    for (auto& group : groups) {
        std::stable_sort(group.begin(), group.end(),
                         [](const Row& a, const Row& b) { return a.stroke.round_index < b.stroke.round_index; });
        std::optional<std::string> problem;
        for (std::size_t k = 0; k < group.size() && !problem; ++k) {
            const int expected = static_cast<int>(k) + 1;
            const int got = group[k].stroke.round_index;
            if (got == expected) continue;
            problem = got < expected ? "duplicate round " + std::to_string(got) : "gap at " + std::to_string(expected);
        }
        if (problem) {
            for (const Row& row : group) result.rejects.push_back({row.line, row.raw, *problem});
            continue;
        }
        Rally rally;
        rally.match_id = group.front().match_id;
        rally.rally_id = group.front().rally_id;
        for (Row& row : group) rally.strokes.push_back(row.stroke);
        // Row format has no player names; the sidecar may override these.
        rally.player_a = default_player_name(rally.match_id, Player::A);
        rally.player_b = default_player_name(rally.match_id, Player::B);
        result.rallies.push_back(std::move(rally));
    }
    std::sort(result.rejects.begin(), result.rejects.end(),
              [](const RejectedRow& a, const RejectedRow& b) { return a.line < b.line; });
    result.meta = DatasetMeta::compute(result.rallies);
    return result;
}

void write_dataset(std::ostream& out, const std::vector<Rally>& rallies, const ShotTypeVocab& vocab,
                   const CourtSpec& court) {
    out << kDatasetHeader << '\n';
    for (const Rally& r : rallies) {
        for (const Stroke& s : r.strokes) {
            const Point land = from_canonical(s.landing, s.player, court);
            const Point loc = from_canonical(s.player_location, s.player, court);
            out << r.match_id << ',' << r.rally_id << ',' << s.round_index << ',' << to_char(s.player) << ','
                << vocab.name(s.shot_type) << ',' << csv::fixed6(land.x) << ',' << csv::fixed6(land.y) << ','
                << csv::fixed6(loc.x) << ',' << csv::fixed6(loc.y) << '\n';
        }
    }
}

void write_dataset(const std::string& path, const std::vector<Rally>& rallies, const ShotTypeVocab& vocab,
                   const CourtSpec& court) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write dataset: " + path);
    write_dataset(out, rallies, vocab, court);
    if (has_default_player_names(rallies)) return;
    std::ofstream side(players_sidecar_path(path), std::ios::binary);
    if (!side) throw InputError("cannot write player sidecar for: " + path);
    side << "match_id,player_a,player_b\n";
    std::set<std::string> seen;
    for (const Rally& r : rallies) {
        if (seen.insert(r.match_id).second) side << r.match_id << ',' << r.player_a << ',' << r.player_b << '\n';
    }
}

void write_rejects(const std::string& path, const std::vector<RejectedRow>& rejects) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write reject report: " + path);
    out << kDatasetHeader << ",reason\n";
    for (const auto& r : rejects) {
        std::string reason = r.reason;
        std::replace(reason.begin(), reason.end(), ',', ';');
        out << r.raw << ',' << reason << '\n';
    }
}

void FilterPolicy::validate() const {
    if (min_rally_length < static_cast<std::size_t>(kObservedStrokes + 1)) {
        throw ConfigError("min_rally_length must be at least " + std::to_string(kObservedStrokes + 1));
    }
}

FilterResult filter_training(const std::vector<Rally>& rallies, const FilterPolicy& policy) {
    policy.validate();
    std::unordered_map<std::string, std::size_t> match_total;
    for (const Rally& r : rallies) match_total[r.match_id] += r.size();

    FilterResult result;
    for (const Rally& r : rallies) {
        std::string reason;
        if (policy.max_match_total_rounds && match_total[r.match_id] > *policy.max_match_total_rounds) {
            reason = "match total rounds " + std::to_string(match_total[r.match_id]) + " > " +
                     std::to_string(*policy.max_match_total_rounds);
        } else if (r.size() < policy.min_rally_length) {
            reason = "rally length " + std::to_string(r.size()) + " < " + std::to_string(policy.min_rally_length);
        } else if (policy.max_rally_length && r.size() > *policy.max_rally_length) {
            reason = "rally length " + std::to_string(r.size()) + " > " + std::to_string(*policy.max_rally_length);
        }
        if (reason.empty()) {
            result.kept.push_back(r);
        } else {
            result.dropped.push_back({r.match_id, r.rally_id, std::move(reason)});
        }
    }
    return result;
}

SplitResult split(const std::vector<Rally>& rallies, double train_fraction, std::uint64_t seed, bool by_match) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
    if (rallies.empty()) throw InputError("cannot split an empty rally list");

    // Units are rallies or matches; each rally is tagged with its unit.
    std::vector<std::size_t> unit_of(rallies.size());
    std::size_t n_units = 0;
    if (by_match) {
        std::unordered_map<std::string, std::size_t> ids;
        for (std::size_t i = 0; i < rallies.size(); ++i) {
            auto [it, inserted] = ids.emplace(rallies[i].match_id, ids.size());
            unit_of[i] = it->second;
        }
        n_units = ids.size();
    } else {
        for (std::size_t i = 0; i < rallies.size(); ++i) unit_of[i] = i;
        n_units = rallies.size();
    }

    std::vector<std::size_t> order(n_units);
    for (std::size_t i = 0; i < n_units; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n_units; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n_units) - 1e-9));
    std::vector<bool> in_train(n_units, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

    SplitResult result;
    for (std::size_t i = 0; i < rallies.size(); ++i) {
        (in_train[unit_of[i]] ? result.train : result.validation).push_back(rallies[i]);
    }
    if (result.validation.empty()) result.warnings.push_back("validation split is empty");
    return result;
}

}  // namespace strokecast
