#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace strokecast {

/// Number of observed strokes handed to the forecaster.
inline constexpr int kObservedStrokes = 4;

enum class Player : std::uint8_t { A, B };

inline Player other(Player p) { return p == Player::A ? Player::B : Player::A; }
inline char to_char(Player p) { return p == Player::A ? 'A' : 'B'; }

// Ball round 1 is always hit by A (the server), then strict alternation.
inline Player hitter_of_round(int round_index) { return round_index % 2 == 1 ? Player::A : Player::B; }

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct ShotType {
    int id = 0;
    std::string name;
    bool is_serve = false;
};

/// Ordered shot-type vocabulary. Ids are dense 0..V-1 and names are unique
/// (case-insensitively).
class ShotTypeVocab {
public:
    // Takes (name, is_serve) in id order. Throws ConfigError on duplicates or empties.
    explicit ShotTypeVocab(std::vector<std::pair<std::string, bool>> entries);

    // The six named types plus four placeholders; "long service" and
    // "short service" are the only serves.
    static ShotTypeVocab default_vocab();

    // CSV with header `name,is_serve`, is_serve in {0,1,true,false}.
    static ShotTypeVocab load(const std::string& path);

    int size() const { return static_cast<int>(entries_.size()); }
    const ShotType& at(int id) const;
    const std::string& name(int id) const { return at(id).name; }
    bool is_serve(int id) const { return at(id).is_serve; }
    const std::vector<ShotType>& entries() const { return entries_; }

    std::optional<int> find(std::string_view name) const;
    std::vector<int> serve_ids() const;

    friend bool operator==(const ShotTypeVocab& a, const ShotTypeVocab& b);

private:
    std::vector<ShotType> entries_;
};

/// Court geometry in meters plus the coordinate normalization used by the model.
///
/// Frame: origin at a corner, x across the width, y along the length. Player A
/// defends y in [0, L/2], player B defends y in [L/2, L].
struct CourtSpec {
    double width_m = 6.1;
    double length_m = 13.4;
    double mean_x = 3.05;
    double mean_y = 6.7;
    double std_x = 1.76;
    double std_y = 3.87;

    void validate() const;

    friend bool operator==(const CourtSpec&, const CourtSpec&) = default;
};

struct Stroke {
    int round_index = 1;
    Player player = Player::A;
    int shot_type = 0;
    Point landing;          // canonical frame, meters
    Point player_location;  // canonical frame, meters

    friend bool operator==(const Stroke&, const Stroke&) = default;
};

/// One rally. Strokes are stored in the canonical frame: every shot travels
/// toward increasing y, so the hitter is on the near half and the landing spot
/// is on the far half. B's strokes are rotated by 180 degrees on ingest.
struct Rally {
    std::string rally_id;
    std::string match_id;
    std::string player_a;
    std::string player_b;
    std::vector<Stroke> strokes;

    const std::string& name_of(Player p) const { return p == Player::A ? player_a : player_b; }
    std::size_t size() const { return strokes.size(); }
    // Key used to join predictions with ground truth.
    std::string key() const { return match_id + "/" + rally_id; }

    friend bool operator==(const Rally&, const Rally&) = default;
};

class ZoneId {
public:
    explicit ZoneId(int value);
    int value() const { return value_; }
    friend bool operator==(ZoneId, ZoneId) = default;

private:
    int value_;
};

inline constexpr int kZoneCount = 10;
inline constexpr int kOutOfCourtZone = 10;

struct Violation {
    std::size_t stroke_index;  // 1-based, 0 for rally-level problems
    std::string rule;
};

std::vector<Violation> validate_rally(const Rally& rally, const ShotTypeVocab& vocab, bool strict_serve);

/// Landing zone on `receiver_side`'s half-court, coordinates in the court frame.
///
/// Zones 1..9 form a 3x3 grid seen from the receiver facing the net: columns
/// left to right, rows from the net to the baseline, zone = 3*row + col + 1.
/// Anything outside that half-court (sidelines and the net line included as
/// inside) is zone 10. Points on an interior grid line go to the lower zone id.
ZoneId coord_to_zone(Point landing, const CourtSpec& court, Player receiver_side);

Point normalize_coord(Point p, const CourtSpec& court);
Point denormalize_coord(Point p, const CourtSpec& court);

// 180-degree rotation about the court center; its own inverse.
Point rotate_half_turn(Point p, const CourtSpec& court);

// Court frame <-> canonical frame for a stroke hit by `hitter`.
inline Point to_canonical(Point p, Player hitter, const CourtSpec& court) {
    return hitter == Player::A ? p : rotate_half_turn(p, court);
}
inline Point from_canonical(Point p, Player hitter, const CourtSpec& court) {
    return to_canonical(p, hitter, court);
}

// Zone of a canonical landing point (receiver is always on the far half).
inline ZoneId canonical_landing_zone(Point p, const CourtSpec& court) {
    return coord_to_zone(p, court, Player::B);
}

std::string to_lower(std::string_view s);

}  // namespace strokecast
