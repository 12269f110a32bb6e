#include "strokecast/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "strokecast/csv.hpp"
#include "strokecast/errors.hpp"

namespace strokecast {

SampleSetLoss evaluate_sample_set(const SampleSet& predictions, std::span<const Rally> truth, const CourtSpec& court,
                                  int tau) {
    std::unordered_map<std::string, const PredictedRally*> by_key;
    for (const PredictedRally& p : predictions) {
        if (!by_key.emplace(p.rally_key, &p).second) throw InputError("duplicate predictions for rally " + p.rally_key);
    }
    SampleSetLoss out;
    std::size_t matched = 0;
    for (const Rally& r : truth) {
        if (r.size() <= static_cast<std::size_t>(tau)) continue;
        const auto it = by_key.find(r.key());
        if (it == by_key.end()) throw InputError("no predictions for rally " + r.key());
        ++matched;
        const PredictedRally& p = *it->second;
        const std::size_t expected = r.size() - static_cast<std::size_t>(tau);
        if (p.strokes.size() != expected) {
            throw InputError("rally " + r.key() + ": expected " + std::to_string(expected) + " predicted strokes, got " +
                             std::to_string(p.strokes.size()));
        }
        for (std::size_t i = 0; i < expected; ++i) {
            const Stroke& t = r.strokes[static_cast<std::size_t>(tau) + i];
            const PredictedStroke& s = p.strokes[i];
            if (s.ball_round != t.round_index) {
                throw InputError("rally " + r.key() + ": prediction for round " + std::to_string(s.ball_round) +
                                 " where round " + std::to_string(t.round_index) + " was expected");
            }
            if (s.type_probs.empty()) throw InputError("rally " + r.key() + ": missing type probabilities");
            if (t.shot_type < 0 || static_cast<std::size_t>(t.shot_type) >= s.type_probs.size()) {
                throw InputError("rally " + r.key() + ": true type outside the probability vector");
            }
            const Point actual = from_canonical(t.landing, t.player, court);
            StrokeLoss l;
            l.rally_key = r.key();
            l.ball_round = t.round_index;
            const double p_true = s.type_probs[static_cast<std::size_t>(t.shot_type)];
            l.clamped = !(p_true >= kMinProbability);
            l.cross_entropy = -std::log(l.clamped ? kMinProbability : p_true);
            l.abs_error = std::abs(actual.x - s.landing.x) + std::abs(actual.y - s.landing.y);
            out.clamped += l.clamped ? 1 : 0;
            out.strokes.push_back(std::move(l));
        }
    }
    if (matched != by_key.size()) throw InputError("predictions contain rallies missing from the ground truth");
    if (out.strokes.empty()) throw InputError("no predicted strokes to score");
    double total = 0.0;
    for (const StrokeLoss& l : out.strokes) total += l.total();
    out.loss = total / static_cast<double>(out.strokes.size());
    return out;
}

double sample_set_loss(const SampleSet& predictions, std::span<const Rally> truth, const CourtSpec& court, int tau) {
    return evaluate_sample_set(predictions, truth, court, tau).loss;
}

double score_min6(std::span<const double> losses) {
    if (losses.size() != kScoredSampleSets) {
        throw InputError("expected 6 sample sets, got " + std::to_string(losses.size()));
    }
    for (double l : losses) {
        if (!std::isfinite(l)) throw InputError("sample-set loss is not finite");
    }
    return *std::min_element(losses.begin(), losses.end());
}

ScoreReport score_predictions(const PredictionFile& file, std::span<const Rally> truth, const CourtSpec& court,
                              int tau) {
    if (file.sets.size() != kScoredSampleSets) {
        throw InputError("expected 6 sample sets, got " + std::to_string(file.sets.size()));
    }
    ScoreReport report;
    std::vector<SampleSetLoss> sets;
    for (const SampleSet& s : file.sets) {
        sets.push_back(evaluate_sample_set(s, truth, court, tau));
        report.set_losses.push_back(sets.back().loss);
        report.clamped += sets.back().clamped;
    }
    report.score = score_min6(report.set_losses);
    report.best_set = static_cast<std::size_t>(
        std::find(report.set_losses.begin(), report.set_losses.end(), report.score) - report.set_losses.begin());
    for (double l : report.set_losses) {
        if (report.score > l) throw std::logic_error("score exceeds a sample-set loss");
    }

    const SampleSetLoss& best = sets[report.best_set];
    report.n_strokes = best.strokes.size();
    const double n = static_cast<double>(report.n_strokes);
    std::map<int, std::pair<double, std::size_t>> rounds;
    for (const StrokeLoss& l : best.strokes) {
        if (report.per_rally.empty() || report.per_rally.back().first != l.rally_key) {
            report.per_rally.emplace_back(l.rally_key, 0.0);
        }
        report.per_rally.back().second += l.total() / n;
        rounds[l.ball_round].first += l.total();
        ++rounds[l.ball_round].second;
    }
    for (const auto& [round, acc] : rounds) report.per_round[round] = acc.first / static_cast<double>(acc.second);
    return report;
}

void write_score_report(std::ostream& out, const ScoreReport& report) {
    for (std::size_t i = 0; i < report.set_losses.size(); ++i) {
        out << "l_" << (i + 1) << ',' << csv::exact(report.set_losses[i]) << '\n';
    }
    out << "score," << csv::exact(report.score) << '\n';
    out << "best_sample," << (report.best_set + 1) << '\n';
    out << "predicted_strokes," << report.n_strokes << '\n';
    out << "clamped_probabilities," << report.clamped << '\n';
    for (const auto& [round, loss] : report.per_round) out << "round_" << round << ',' << csv::exact(loss) << '\n';
}

std::string probability_column(const std::string& type_name) {
    std::string col = "prob_" + type_name;
    std::replace(col.begin(), col.end(), ' ', '_');
    return col;
}

PredictedStroke canonicalize(PredictedStroke s) {
    s.landing = {csv::canonical6(s.landing.x), csv::canonical6(s.landing.y)};
    constexpr double kUnits = 1e6;
    const double total = std::accumulate(s.type_probs.begin(), s.type_probs.end(), 0.0);
    if (!(total > 0.0)) throw InputError("probability vector sums to zero");
    std::vector<long long> units(s.type_probs.size());
    std::vector<double> remainder(s.type_probs.size());
    long long assigned = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const double scaled = s.type_probs[i] / total * kUnits;
        units[i] = static_cast<long long>(std::floor(scaled));
        remainder[i] = scaled - static_cast<double>(units[i]);
        assigned += units[i];
    }
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (long long k = 0; k < static_cast<long long>(kUnits) - assigned; ++k) {
        ++units[order[static_cast<std::size_t>(k) % order.size()]];
    }
    for (std::size_t i = 0; i < units.size(); ++i) {
        s.type_probs[i] = csv::canonical6(static_cast<double>(units[i]) / kUnits);
    }
    return s;
}

void write_predictions(std::ostream& out, const PredictionFile& file) {
    out << "rally_id,sample_id,ball_round,landing_x,landing_y";
    for (const auto& name : file.type_names) out << ',' << probability_column(name);
    out << '\n';
    if (file.sets.empty()) return;
    const std::size_t n_rallies = file.sets.front().size();
    for (const SampleSet& s : file.sets) {
        if (s.size() != n_rallies) throw InputError("sample sets cover different rallies");
    }
    for (std::size_t r = 0; r < n_rallies; ++r) {
        for (std::size_t j = 0; j < file.sets.size(); ++j) {
            const PredictedRally& pr = file.sets[j][r];
            for (const PredictedStroke& s : pr.strokes) {
                if (s.type_probs.size() != file.type_names.size()) throw InputError("probability vector size mismatch");
                out << pr.rally_key << ',' << (j + 1) << ',' << s.ball_round << ',' << csv::fixed6(s.landing.x) << ','
                    << csv::fixed6(s.landing.y);
                for (double p : s.type_probs) out << ',' << csv::fixed6(p);
                out << '\n';
            }
        }
    }
}

void write_predictions(const std::string& path, const PredictionFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write predictions: " + path);
    write_predictions(out, file);
}

PredictionFile read_predictions(std::istream& in, const ShotTypeVocab& vocab) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("prediction file is empty");
    const auto header = csv::split(csv::trim_cr(line));
    const std::size_t v = static_cast<std::size_t>(vocab.size());
    const std::vector<std::string> fixed = {"rally_id", "sample_id", "ball_round", "landing_x", "landing_y"};
    bool ok = header.size() == fixed.size() + v && std::equal(fixed.begin(), fixed.end(), header.begin());
    for (std::size_t t = 0; ok && t < v; ++t) {
        ok = to_lower(header[fixed.size() + t]) == to_lower(probability_column(vocab.name(static_cast<int>(t))));
    }
    if (!ok) throw InputError("prediction header does not match the shot-type vocabulary");

    PredictionFile file;
    for (const auto& t : vocab.entries()) file.type_names.push_back(t.name);
    // sample index -> rally key -> position in that set
    std::vector<std::unordered_map<std::string, std::size_t>> index;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = csv::trim_cr(std::move(line));
        if (line.empty()) continue;
        const auto f = csv::split(line);
        const auto where = [&] { return "prediction line " + std::to_string(lineno) + ": "; };
        if (f.size() != header.size()) throw InputError(where() + "wrong number of fields");
        const auto sample = csv::parse_int(f[1]);
        const auto round = csv::parse_int(f[2]);
        if (!sample || *sample < 1 || *sample > 1000000) throw InputError(where() + "bad sample_id");
        if (!round || *round < 1) throw InputError(where() + "bad ball_round");
        PredictedStroke s;
        s.ball_round = static_cast<int>(*round);
        const auto x = csv::parse_double(f[3]);
        const auto y = csv::parse_double(f[4]);
        if (!x || !y) throw InputError(where() + "bad landing coordinate");
        s.landing = {*x, *y};
        for (std::size_t t = 0; t < v; ++t) {
            const auto p = csv::parse_double(f[fixed.size() + t]);
            if (!p || *p < 0.0) throw InputError(where() + "bad probability");
            s.type_probs.push_back(*p);
        }
        const auto j = static_cast<std::size_t>(*sample - 1);
        if (j >= file.sets.size()) {
            file.sets.resize(j + 1);
            index.resize(j + 1);
        }
        auto [it, inserted] = index[j].emplace(f[0], file.sets[j].size());
        if (inserted) file.sets[j].push_back(PredictedRally{f[0], {}});
        file.sets[j][it->second].strokes.push_back(std::move(s));
    }
    for (std::size_t j = 0; j < file.sets.size(); ++j) {
        if (file.sets[j].empty()) throw InputError("sample_id " + std::to_string(j + 1) + " has no rows");
        for (auto& r : file.sets[j]) {
            std::stable_sort(r.strokes.begin(), r.strokes.end(),
                             [](const PredictedStroke& a, const PredictedStroke& b) { return a.ball_round < b.ball_round; });
        }
    }
    return file;
}

PredictionFile read_predictions(const std::string& path, const ShotTypeVocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open predictions: " + path);
    return read_predictions(in, vocab);
}

}  // namespace strokecast
