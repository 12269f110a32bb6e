#include "strokecast/court.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "strokecast/errors.hpp"

namespace strokecast {

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

ShotTypeVocab::ShotTypeVocab(std::vector<std::pair<std::string, bool>> entries) {
    if (entries.empty()) throw ConfigError("shot-type vocabulary is empty");
    std::set<std::string> seen;
    for (auto& [name, serve] : entries) {
        if (name.empty()) throw ConfigError("shot-type vocabulary has an empty name");
        if (name.find(',') != std::string::npos) throw ConfigError("shot-type name contains a comma: " + name);
        if (!seen.insert(to_lower(name)).second) throw ConfigError("duplicate shot-type name: " + name);
        entries_.push_back(ShotType{static_cast<int>(entries_.size()), std::move(name), serve});
    }
}

ShotTypeVocab ShotTypeVocab::default_vocab() {
    return ShotTypeVocab({
        {"long service", true},
        {"short service", true},
        {"net shot", false},
        {"smash", false},
        {"drive", false},
        {"defensive shot", false},
        {"clear", false},
        {"drop", false},
        {"lob", false},
        {"push", false},
    });
}

ShotTypeVocab ShotTypeVocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocabulary file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("vocabulary file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (to_lower(line) != "name,is_serve") throw ConfigError("vocabulary header must be 'name,is_serve': " + path);
    std::vector<std::pair<std::string, bool>> entries;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'name,is_serve'");
        }
        const std::string flag = to_lower(line.substr(comma + 1));
        bool serve = false;
        if (flag == "1" || flag == "true") {
            serve = true;
        } else if (flag != "0" && flag != "false") {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": is_serve must be 0/1/true/false");
        }
        entries.emplace_back(line.substr(0, comma), serve);
    }
    return ShotTypeVocab(std::move(entries));
}

const ShotType& ShotTypeVocab::at(int id) const {
    if (id < 0 || id >= size()) throw InputError("shot type id out of range: " + std::to_string(id));
    return entries_[static_cast<std::size_t>(id)];
}

std::optional<int> ShotTypeVocab::find(std::string_view name) const {
    const std::string needle = to_lower(name);
    for (const auto& e : entries_) {
        if (to_lower(e.name) == needle) return e.id;
    }
    return std::nullopt;
}

std::vector<int> ShotTypeVocab::serve_ids() const {
    std::vector<int> ids;
    for (const auto& e : entries_) {
        if (e.is_serve) ids.push_back(e.id);
    }
    return ids;
}

bool operator==(const ShotTypeVocab& a, const ShotTypeVocab& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
        if (a.entries_[i].name != b.entries_[i].name || a.entries_[i].is_serve != b.entries_[i].is_serve) return false;
    }
    return true;
}

void CourtSpec::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(width_m) || !positive(length_m)) throw ConfigError("court width and length must be positive");
    if (!positive(std_x) || !positive(std_y)) throw ConfigError("court normalization std must be positive");
    if (!std::isfinite(mean_x) || !std::isfinite(mean_y)) throw ConfigError("court normalization mean must be finite");
}

ZoneId::ZoneId(int value) : value_(value) {
    if (value < 1 || value > kZoneCount) throw InputError("zone id out of range: " + std::to_string(value));
}

std::vector<Violation> validate_rally(const Rally& rally, const ShotTypeVocab& vocab, bool strict_serve) {
    std::vector<Violation> out;
    if (rally.strokes.empty()) {
        out.push_back({0, "rally has no strokes"});
        return out;
    }
    auto finite = [](Point p) { return std::isfinite(p.x) && std::isfinite(p.y); };
    for (std::size_t k = 0; k < rally.strokes.size(); ++k) {
        const Stroke& s = rally.strokes[k];
        const std::size_t index = k + 1;
        if (s.round_index != static_cast<int>(index)) {
            out.push_back({index, "round_index " + std::to_string(s.round_index) + " != " + std::to_string(index)});
        }
        if (s.player != hitter_of_round(static_cast<int>(index))) {
            out.push_back({index, "players must alternate A,B,A,... (found " + std::string(1, to_char(s.player)) + ")"});
        }
        if (!finite(s.landing) || !finite(s.player_location)) {
            out.push_back({index, "non-finite coordinate"});
        }
        if (s.shot_type < 0 || s.shot_type >= vocab.size()) {
            out.push_back({index, "unknown shot type id " + std::to_string(s.shot_type)});
            continue;
        }
        if (strict_serve) {
            const bool serve = vocab.is_serve(s.shot_type);
            if (index == 1 && !serve) out.push_back({index, "first stroke must be a serve"});
            if (index > 1 && serve) out.push_back({index, "serve type after round 1"});
        }
    }
    return out;
}

ZoneId coord_to_zone(Point landing, const CourtSpec& court, Player receiver_side) {
    if (!std::isfinite(landing.x) || !std::isfinite(landing.y)) throw InputError("coord_to_zone: non-finite coordinate");
    const double half = court.length_m / 2.0;
    // u: distance from the receiver's left sideline, v: distance from the net.
    double u = 0.0;
    double v = 0.0;
    if (receiver_side == Player::B) {
        u = court.width_m - landing.x;
        v = landing.y - half;
    } else {
        u = landing.x;
        v = half - landing.y;
    }
    if (u < 0.0 || u > court.width_m || v < 0.0 || v > half) return ZoneId(kOutOfCourtZone);
    auto cell = [](double t, double extent) {
        if (t <= extent / 3.0) return 0;
        if (t <= 2.0 * extent / 3.0) return 1;
        return 2;
    };
    const int col = cell(u, court.width_m);
    const int row = cell(v, half);
    return ZoneId(3 * row + col + 1);
}

Point normalize_coord(Point p, const CourtSpec& court) {
    court.validate();
    return {(p.x - court.mean_x) / court.std_x, (p.y - court.mean_y) / court.std_y};
}

Point denormalize_coord(Point p, const CourtSpec& court) {
    court.validate();
    return {p.x * court.std_x + court.mean_x, p.y * court.std_y + court.mean_y};
}

Point rotate_half_turn(Point p, const CourtSpec& court) {
    return {court.width_m - p.x, court.length_m - p.y};
}

}  // namespace strokecast
