#include "strokecast/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "strokecast/errors.hpp"

namespace strokecast {

int sample_rally_type(std::span<const double> probs, const ShotTypeVocab& vocab, Rng& rng) {
    if (probs.size() != static_cast<std::size_t>(vocab.size())) throw InputError("probability vector size mismatch");
    std::vector<double> masked(probs.begin(), probs.end());
    bool any = false;
    for (std::size_t t = 0; t < masked.size(); ++t) {
        if (vocab.is_serve(static_cast<int>(t))) masked[t] = 0.0;
        any = any || masked[t] > 0.0;
    }
    if (!any) {
        // All rally mass underflowed; fall back to uniform over rally shots.
        for (std::size_t t = 0; t < masked.size(); ++t) masked[t] = vocab.is_serve(static_cast<int>(t)) ? 0.0 : 1.0;
    }
    return static_cast<int>(rng.categorical(masked));
}

Point sample_landing(const PredictionStep& step, Rng& rng) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double x = step.mu_x + step.sigma_x * z1;
    const double y = step.mu_y + step.sigma_y * (step.rho * z1 + std::sqrt(1.0 - step.rho * step.rho) * z2);
    return {x, y};
}

Rng sample_stream(std::uint64_t seed, std::size_t rally_index, std::size_t sample) {
    return Rng(seed).split(rally_index).split(sample);
}

std::vector<GeneratedStroke> generate_suffix(const Forecaster& model, const Rally& rally, std::size_t horizon,
                                             Rng rng) {
    const auto tau = static_cast<std::size_t>(model.config.tau);
    if (horizon == 0) throw InputError("generation horizon must be at least 1");
    if (rally.size() < tau) {
        throw InputError("rally " + rally.key() + " has fewer than " + std::to_string(tau) + " observed strokes");
    }
    Rally work = rally;
    work.strokes.resize(tau);
    std::vector<GeneratedStroke> out;
    for (std::size_t step = 0; step < horizon; ++step) {
        Tape tape(false);
        const ParamVars p(tape, model.params);
        const StrokeSequence seq = make_sequence(work, work.size(), model.players, model.court);
        const ForwardGraph g = build_forward(tape, p, model.config, seq, DropoutContext{});
        PredictionStep pred = decode_heads(g.heads, seq.size() - 1).front();

        GeneratedStroke s;
        s.round_index = static_cast<int>(work.size()) + 1;
        s.hitter = hitter_of_round(s.round_index);
        s.shot_type = sample_rally_type(pred.type_probs, model.vocab, rng);
        s.canonical_landing = denormalize_coord(sample_landing(pred, rng), model.court);
        s.landing = from_canonical(s.canonical_landing, s.hitter, model.court);
        s.type_probs = pred.type_probs;
        s.step = std::move(pred);

        Stroke next;
        next.round_index = s.round_index;
        next.player = s.hitter;
        next.shot_type = s.shot_type;
        next.landing = s.canonical_landing;
        next.player_location = rotate_half_turn(work.strokes.back().landing, model.court);
        work.strokes.push_back(next);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<GeneratedStroke> generate_suffix(const Forecaster& model, const Rally& rally, std::size_t horizon,
                                             std::uint64_t seed) {
    return generate_suffix(model, rally, horizon, Rng(seed));
}

PredictedRally to_predicted(const Rally& rally, std::span<const GeneratedStroke> strokes, bool canonical) {
    PredictedRally pr{rally.key(), {}};
    for (const GeneratedStroke& g : strokes) {
        PredictedStroke s{g.round_index, g.landing, g.type_probs};
        pr.strokes.push_back(canonical ? canonicalize(std::move(s)) : std::move(s));
    }
    return pr;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

PredictionFile generate_predictions(const Forecaster& model, std::span<const Rally> rallies, std::size_t samples,
                                    std::uint64_t seed, std::size_t jobs, bool canonical) {
    if (samples == 0) throw InputError("need at least one sample");
    const auto tau = static_cast<std::size_t>(model.config.tau);
    std::vector<std::size_t> scored;
    for (std::size_t i = 0; i < rallies.size(); ++i) {
        if (rallies[i].size() > tau) scored.push_back(i);
    }
    PredictionFile file;
    for (const auto& t : model.vocab.entries()) file.type_names.push_back(t.name);
    file.sets.assign(samples, SampleSet(scored.size()));
    parallel_for(scored.size() * samples, jobs, [&](std::size_t task) {
        const std::size_t slot = task / samples;
        const std::size_t j = task % samples;
        const Rally& r = rallies[scored[slot]];
        const auto strokes = generate_suffix(model, r, r.size() - tau, sample_stream(seed, scored[slot], j));
        file.sets[j][slot] = to_predicted(r, strokes, canonical);
    });
    return file;
}

}  // namespace strokecast
