#include <cmath>
#include <cstdio>
#include <map>

#include "strokecast/dataset.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/rng.hpp"

namespace strokecast {

namespace {

// Typical depth of each named shot as a fraction of the half-court (0 = net).
double typical_depth(const std::string& name, int id) {
    static const std::map<std::string, double> depth = {
        {"net shot", 0.12}, {"short service", 0.3}, {"drop", 0.3},  {"push", 0.45}, {"drive", 0.5},
        {"smash", 0.55},    {"defensive shot", 0.7}, {"lob", 0.88}, {"clear", 0.9}, {"long service", 0.92},
    };
    const auto it = depth.find(to_lower(name));
    if (it != depth.end()) return it->second;
    return 0.15 + 0.7 * static_cast<double>((id * 37) % 10) / 9.0;
}

struct Cholesky {
    double l11, l21, l22;
};

Cholesky factor(const PlayerStyle::Kernel& k, const std::string& who) {
    if (!(k.cov_xx > 0.0) || !std::isfinite(k.cov_xx) || !std::isfinite(k.cov_xy) || !std::isfinite(k.cov_yy)) {
        throw ConfigError("degenerate landing covariance for " + who);
    }
    const double l11 = std::sqrt(k.cov_xx);
    const double l21 = k.cov_xy / l11;
    const double rest = k.cov_yy - l21 * l21;
    if (!(rest > 0.0)) throw ConfigError("degenerate landing covariance for " + who);
    return {l11, l21, std::sqrt(rest)};
}

}  // namespace

std::vector<PlayerStyle> default_player_styles(const ShotTypeVocab& vocab, const CourtSpec& court,
                                               std::size_t n_players) {
    if (n_players < 2) throw ConfigError("need at least two players");
    std::vector<int> rally_types;
    for (const auto& t : vocab.entries()) {
        if (!t.is_serve) rally_types.push_back(t.id);
    }
    if (rally_types.empty()) throw ConfigError("vocabulary has no non-serve types");

    const double half = court.length_m / 2.0;
    std::vector<PlayerStyle> styles;
    for (std::size_t p = 0; p < n_players; ++p) {
        PlayerStyle style;
        char name[32];
        std::snprintf(name, sizeof name, "player_%02zu", p + 1);
        style.name = name;
        style.type_weights.assign(static_cast<std::size_t>(vocab.size()), 0.3);
        const std::size_t m = rally_types.size();
        style.type_weights[static_cast<std::size_t>(rally_types[(2 * p) % m])] = 4.0;
        style.type_weights[static_cast<std::size_t>(rally_types[(2 * p + 1) % m])] = 3.0;
        // Alternate players favour opposite sides of the court.
        const double lateral = (p % 2 == 0 ? -1.0 : 1.0) * 0.12 * court.width_m;
        for (const auto& t : vocab.entries()) {
            PlayerStyle::Kernel k;
            const double across = 0.25 + 0.5 * static_cast<double>((t.id * 53) % 7) / 6.0;
            k.mean = {court.width_m * across + lateral, half + typical_depth(t.name, t.id) * half};
            k.cov_xx = 0.09;
            k.cov_yy = 0.09;
            style.landing.push_back(k);
        }
        styles.push_back(std::move(style));
    }
    return styles;
}

std::vector<Rally> synthesize_dataset(const SynthConfig& config, const ShotTypeVocab& vocab, const CourtSpec& court) {
    court.validate();
    const auto& styles = config.player_styles;
    const std::size_t n_players = styles.size();
    if (n_players < 2) throw ConfigError("synthesis needs at least two player styles");
    if (!(config.mean_length >= 5.0)) throw ConfigError("mean_length must be at least 5");
    if (config.rallies_per_match == 0) throw ConfigError("rallies_per_match must be positive");
    if (vocab.serve_ids().empty()) throw ConfigError("vocabulary has no serve types");

    const auto v = static_cast<std::size_t>(vocab.size());
    std::vector<std::vector<double>> serve_w(n_players, std::vector<double>(v, 0.0));
    std::vector<std::vector<double>> rally_w(n_players, std::vector<double>(v, 0.0));
    std::vector<std::vector<Cholesky>> chol(n_players);
    for (std::size_t p = 0; p < n_players; ++p) {
        const PlayerStyle& s = styles[p];
        if (s.type_weights.size() != v || s.landing.size() != v) {
            throw ConfigError("style of " + s.name + " must cover all " + std::to_string(v) + " shot types");
        }
        double serve_total = 0.0;
        double rally_total = 0.0;
        for (std::size_t t = 0; t < v; ++t) {
            const double w = s.type_weights[t];
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("negative type weight for " + s.name);
            (vocab.is_serve(static_cast<int>(t)) ? serve_w : rally_w)[p][t] = w;
            (vocab.is_serve(static_cast<int>(t)) ? serve_total : rally_total) += w;
            chol[p].push_back(factor(s.landing[t], s.name + "/" + vocab.name(static_cast<int>(t))));
        }
        // A style with no serve preference serves uniformly.
        if (serve_total == 0.0) {
            for (int id : vocab.serve_ids()) serve_w[p][static_cast<std::size_t>(id)] = 1.0;
        }
        if (rally_total == 0.0) throw ConfigError("style of " + s.name + " puts no weight on rally shots");
    }

    const double p_stop = 1.0 / (config.mean_length - 4.0);
    const Rng root(config.seed);
    std::vector<Rally> rallies;
    rallies.reserve(config.n_rallies);
    for (std::size_t i = 0; i < config.n_rallies; ++i) {
        const std::size_t match = i / config.rallies_per_match;
        const std::size_t a = match % n_players;
        const std::size_t b = (a + 1 + (match / n_players) % (n_players - 1)) % n_players;
        Rng rng = root.split(i);

        Rally rally;
        char buf[32];
        std::snprintf(buf, sizeof buf, "m%03zu", match + 1);
        rally.match_id = buf;
        std::snprintf(buf, sizeof buf, "r%05zu", i + 1);
        rally.rally_id = buf;
        rally.player_a = styles[a].name;
        rally.player_b = styles[b].name;

        std::size_t length = 5;
        while (rng.uniform() >= p_stop) ++length;

        Point previous_landing{};
        for (std::size_t k = 1; k <= length; ++k) {
            Stroke s;
            s.round_index = static_cast<int>(k);
            s.player = hitter_of_round(s.round_index);
            const std::size_t who = s.player == Player::A ? a : b;
            s.shot_type = static_cast<int>(rng.categorical(k == 1 ? serve_w[who] : rally_w[who]));
            const auto& kernel = styles[who].landing[static_cast<std::size_t>(s.shot_type)];
            const Cholesky& c = chol[who][static_cast<std::size_t>(s.shot_type)];
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            s.landing = {kernel.mean.x + c.l11 * z1, kernel.mean.y + c.l21 * z1 + c.l22 * z2};
            if (k == 1) {
                s.player_location = {court.width_m / 2.0 + config.location_noise * rng.normal(),
                                     court.length_m / 2.0 - 2.0 + config.location_noise * rng.normal()};
            } else {
                // The hitter reached the previous shuttle, which landed on their half.
                const Point reached = rotate_half_turn(previous_landing, court);
                s.player_location = {reached.x + config.location_noise * rng.normal(),
                                     reached.y + config.location_noise * rng.normal()};
            }
            previous_landing = s.landing;
            rally.strokes.push_back(s);
        }
        rallies.push_back(std::move(rally));
    }
    return rallies;
}

}  // namespace strokecast
