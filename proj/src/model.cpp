#include "strokecast/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "strokecast/errors.hpp"

namespace strokecast {

std::string to_string(EmbeddingMode mode) { return mode == EmbeddingMode::baseline ? "baseline" : "modified"; }

EmbeddingMode parse_embedding_mode(const std::string& text) {
    const std::string t = to_lower(text);
    if (t == "baseline") return EmbeddingMode::baseline;
    if (t == "modified") return EmbeddingMode::modified;
    throw ConfigError("embedding mode must be 'baseline' or 'modified', got '" + text + "'");
}

void ModelConfig::validate() const {
    if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
    if (n_heads < 1 || embed_dim % n_heads != 0) throw ConfigError("embed_dim must be divisible by n_heads");
    if (n_layers < 1) throw ConfigError("n_layers must be at least 1");
    if (ffn_dim < 1) throw ConfigError("ffn_dim must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
    if (n_players < 0) throw ConfigError("n_players must be non-negative");
    if (tau < 1) throw ConfigError("tau must be at least 1");
}

namespace {

std::string layer_name(int layer, const char* part) { return "encoder." + std::to_string(layer) + "." + part; }

}  // namespace

std::map<std::string, Shape> parameter_shapes(const ModelConfig& c) {
    c.validate();
    const auto d = static_cast<std::size_t>(c.embed_dim);
    const auto v = static_cast<std::size_t>(c.vocab_size);
    const auto f = static_cast<std::size_t>(c.ffn_dim);
    std::map<std::string, Shape> s;
    s["embed.type"] = {v, d};
    s["embed.area.weight"] = {2, d};
    s["embed.area.bias"] = {d};
    s["embed.player"] = {static_cast<std::size_t>(c.n_players) + 1, d};
    s["embed.location.weight"] = {2, d};
    s["embed.location.bias"] = {d};
    for (int l = 0; l < c.n_layers; ++l) {
        if (l == 0) {
            for (const char* w : {"wq_shot", "wk_shot", "wv_shot", "wq_area", "wk_area", "wv_area"}) {
                s[layer_name(l, w)] = {d, d};
            }
        } else {
            for (const char* w : {"wq", "wk", "wv"}) s[layer_name(l, w)] = {d, d};
        }
        s[layer_name(l, "wo")] = {d, d};
        s[layer_name(l, "bo")] = {d};
        s[layer_name(l, "ln1.gain")] = {d};
        s[layer_name(l, "ln1.bias")] = {d};
        s[layer_name(l, "ffn.w1")] = {d, f};
        s[layer_name(l, "ffn.b1")] = {f};
        s[layer_name(l, "ffn.w2")] = {f, d};
        s[layer_name(l, "ffn.b2")] = {d};
        s[layer_name(l, "ln2.gain")] = {d};
        s[layer_name(l, "ln2.bias")] = {d};
    }
    s["fusion.weight"] = {3 * d, d};
    s["fusion.bias"] = {d};
    s["head.type.weight"] = {d, v};
    s["head.type.bias"] = {v};
    s["head.area.weight"] = {d, 5};
    s["head.area.bias"] = {5};
    return s;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    ModelParams p;
    for (const auto& [name, shape] : parameter_shapes(config)) p.arrays_.emplace(name, Array(shape, 0.0));
    return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = zeros(config);
    const Rng root(seed);
    std::uint64_t key = 0;
    for (auto& [name, array] : p.arrays_) {
        Rng rng = root.split(key++);
        const bool gain = name.ends_with(".gain");
        const bool bias = name.ends_with(".bias") || name.ends_with(".bo") || name.ends_with(".b1") ||
                          name.ends_with(".b2");
        if (gain) {
            std::fill(array.values().begin(), array.values().end(), 1.0);
        } else if (bias) {
            continue;
        } else if (name == "embed.type" || name == "embed.player") {
            const double sd = 1.0 / std::sqrt(static_cast<double>(array.dim(1)));
            for (double& v : array.values()) v = sd * rng.normal();
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(array.dim(0) + array.dim(1)));
            for (double& v : array.values()) v = limit * (2.0 * rng.uniform() - 1.0);
        }
    }
    return p;
}

Array& ModelParams::at(const std::string& name) {
    const auto it = arrays_.find(name);
    if (it == arrays_.end()) throw InputError("unknown parameter: " + name);
    return it->second;
}

const Array& ModelParams::at(const std::string& name) const {
    const auto it = arrays_.find(name);
    if (it == arrays_.end()) throw InputError("unknown parameter: " + name);
    return it->second;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, a] : arrays_) n += a.size();
    return n;
}

void ModelParams::check_shapes(const ModelConfig& config) const {
    const auto shapes = parameter_shapes(config);
    if (shapes.size() != arrays_.size()) throw ConfigError("parameter set does not match model config");
    for (const auto& [name, shape] : shapes) {
        const auto it = arrays_.find(name);
        if (it == arrays_.end()) throw ConfigError("missing parameter: " + name);
        if (it->second.shape() != shape) {
            throw ConfigError("parameter " + name + " has shape " + shape_string(it->second.shape()) + ", expected " +
                              shape_string(shape));
        }
        if (!it->second.all_finite()) throw NumericError("parameter " + name + " is not finite");
    }
}

PlayerIndex::PlayerIndex(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (!rows_.emplace(names_[i], static_cast<int>(i)).second) throw ConfigError("duplicate player: " + names_[i]);
    }
}

PlayerIndex PlayerIndex::from_rallies(std::span<const Rally> rallies) {
    std::set<std::string> names;
    for (const Rally& r : rallies) {
        names.insert(r.player_a);
        names.insert(r.player_b);
    }
    return PlayerIndex(std::vector<std::string>(names.begin(), names.end()));
}

int PlayerIndex::row(const std::string& name) const {
    const auto it = rows_.find(name);
    return it == rows_.end() ? unknown_row() : it->second;
}

StrokeSequence make_sequence(const Rally& rally, std::size_t count, const PlayerIndex& players,
                             const CourtSpec& court) {
    if (count == 0 || count > rally.size()) throw InputError("sequence length out of range for rally " + rally.key());
    StrokeSequence seq;
    const int row_a = players.row(rally.player_a);
    const int row_b = players.row(rally.player_b);
    for (std::size_t k = 0; k < count; ++k) {
        const Stroke& s = rally.strokes[k];
        seq.types.push_back(s.shot_type);
        seq.hitters.push_back(s.player);
        seq.player_ids.push_back(s.player == Player::A ? row_a : row_b);
        seq.next_player_ids.push_back(s.player == Player::A ? row_b : row_a);
        seq.landing.push_back(normalize_coord(s.landing, court));
        seq.location.push_back(normalize_coord(s.player_location, court));
        seq.rounds.push_back(s.round_index);
    }
    return seq;
}

ParamVars::ParamVars(Tape& tape, const ModelParams& params) : tape_(&tape) {
    for (const auto& [name, array] : params.arrays()) vars_.emplace(name, tape.input(array));
}

Var ParamVars::operator[](const std::string& name) const {
    const auto it = vars_.find(name);
    if (it == vars_.end()) throw InputError("unknown parameter: " + name);
    return it->second;
}

Var DropoutContext::apply(Var x) const {
    if (!training()) return x;
    return ad::dropout(x, rate, *rng, true);
}

Array positional_encoding(std::span<const int> rounds, int d) {
    const auto dim = static_cast<std::size_t>(d);
    Array pe(Shape{rounds.size(), dim});
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        const double pos = rounds[r];
        for (std::size_t i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
            pe.at(r, i) = i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
        }
    }
    return pe;
}

namespace {

Array coords_array(const std::vector<Point>& pts) {
    Array a(Shape{pts.size(), 2});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        a.at(i, 0) = pts[i].x;
        a.at(i, 1) = pts[i].y;
    }
    return a;
}

Var affine(Var x, Var weight, Var bias) { return ad::add(ad::matmul(x, weight), bias); }

// Mask entries set to 1 are blocked. Row i may see column j iff j <= i and,
// for the player stream, the same player hit both strokes.
std::vector<std::uint8_t> attention_mask(std::span<const Player> hitters, bool same_player) {
    const std::size_t m = hitters.size();
    std::vector<std::uint8_t> mask(m * m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            if (!same_player || hitters[i] == hitters[j]) mask[i * m + j] = 0;
        }
    }
    return mask;
}

constexpr double kBlocked = -1e9;

struct LayerInput {
    Var shot;  // first layer only
    Var area;  // first layer only
    Var hidden;
};

Var encoder_layer(int layer, const LayerInput& in, std::span<const std::uint8_t> mask, const ParamVars& p,
                  const ModelConfig& c, const DropoutContext& dropout) {
    const auto d = static_cast<std::size_t>(c.embed_dim);
    const auto heads = static_cast<std::size_t>(c.n_heads);
    const std::size_t dh = d / heads;
    auto w = [&](const char* part) { return p[layer_name(layer, part)]; };

    std::vector<Var> head_out;
    Var residual;
    if (layer == 0) {
        // Type-area attention: both channels contribute to the scores and values.
        residual = ad::add(in.shot, in.area);
        const Var qs = ad::matmul(in.shot, w("wq_shot"));
        const Var ks = ad::matmul(in.shot, w("wk_shot"));
        const Var vs = ad::matmul(in.shot, w("wv_shot"));
        const Var qa = ad::matmul(in.area, w("wq_area"));
        const Var ka = ad::matmul(in.area, w("wk_area"));
        const Var va = ad::matmul(in.area, w("wv_area"));
        const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(dh));
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t b = h * dh, e = b + dh;
            const Var s_shot = ad::matmul(ad::slice(qs, 1, b, e), ad::transpose(ad::slice(ks, 1, b, e)));
            const Var s_area = ad::matmul(ad::slice(qa, 1, b, e), ad::transpose(ad::slice(ka, 1, b, e)));
            const Var scores = ad::masked_fill(ad::scale(ad::add(s_shot, s_area), scale), mask, kBlocked);
            const Var attn = dropout.apply(ad::softmax(scores, 1));
            const Var values = ad::add(ad::slice(vs, 1, b, e), ad::slice(va, 1, b, e));
            head_out.push_back(ad::matmul(attn, values));
        }
    } else {
        residual = in.hidden;
        const Var q = ad::matmul(in.hidden, w("wq"));
        const Var k = ad::matmul(in.hidden, w("wk"));
        const Var v = ad::matmul(in.hidden, w("wv"));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t b = h * dh, e = b + dh;
            const Var scores = ad::masked_fill(
                ad::scale(ad::matmul(ad::slice(q, 1, b, e), ad::transpose(ad::slice(k, 1, b, e))), scale), mask,
                kBlocked);
            const Var attn = dropout.apply(ad::softmax(scores, 1));
            head_out.push_back(ad::matmul(attn, ad::slice(v, 1, b, e)));
        }
    }
    const Var attended = affine(ad::concat(std::span<const Var>(head_out), 1), w("wo"), w("bo"));
    const Var x = ad::layer_norm(ad::add(residual, dropout.apply(attended)), w("ln1.gain"), w("ln1.bias"));
    const Var ffn = affine(ad::relu(affine(x, w("ffn.w1"), w("ffn.b1"))), w("ffn.w2"), w("ffn.b2"));
    return ad::layer_norm(ad::add(x, dropout.apply(ffn)), w("ln2.gain"), w("ln2.bias"));
}

}  // namespace

EmbeddedStrokes embed_strokes(Tape& tape, const ParamVars& p, const ModelConfig& config, const StrokeSequence& seq) {
    if (seq.size() == 0) throw InputError("embed_strokes: empty sequence");
    for (int t : seq.types) {
        if (t < 0 || t >= config.vocab_size) throw InputError("shot type id out of range: " + std::to_string(t));
    }
    for (int id : seq.player_ids) {
        if (id < 0 || id > config.n_players) throw InputError("unknown player id: " + std::to_string(id));
    }
    const Var type_emb = ad::embedding_lookup(p["embed.type"], seq.types);
    const Var player_emb = ad::embedding_lookup(p["embed.player"], seq.player_ids);
    const Var area_proj = affine(tape.input(coords_array(seq.landing)), p["embed.area.weight"], p["embed.area.bias"]);
    const Var position = tape.input(positional_encoding(seq.rounds, config.embed_dim));

    const Var shot = ad::add(type_emb, player_emb);
    Var area;
    if (config.embedding_mode == EmbeddingMode::modified) {
        const Var loc_proj =
            affine(tape.input(coords_array(seq.location)), p["embed.location.weight"], p["embed.location.bias"]);
        area = ad::add(area_proj, loc_proj);
    } else {
        area = ad::add(ad::relu(area_proj), player_emb);
    }
    return {ad::add(shot, position), ad::add(area, position), position};
}

Contexts encode_contexts(const EmbeddedStrokes& embedded, std::span<const Player> hitters, const ParamVars& p,
                         const ModelConfig& config, const DropoutContext& dropout) {
    if (hitters.size() != embedded.shot.shape()[0]) throw InputError("encode_contexts: hitters/sequence mismatch");
    const Var shot = dropout.apply(embedded.shot);
    const Var area = dropout.apply(embedded.area);
    Contexts out;
    for (bool same_player : {false, true}) {
        const auto mask = attention_mask(hitters, same_player);
        Var h = encoder_layer(0, {shot, area, Var()}, mask, p, config, dropout);
        for (int l = 1; l < config.n_layers; ++l) h = encoder_layer(l, {Var(), Var(), h}, mask, p, config, dropout);
        (same_player ? out.player : out.rally) = h;
    }
    return out;
}

Var fuse_contexts(Var rally, Var player, Var position, const ParamVars& p) {
    if (rally.shape() != player.shape() || rally.shape() != position.shape()) {
        throw InputError("fuse_contexts: context dimensions differ");
    }
    const Var gate = ad::sigmoid(affine(ad::concat({rally, player, position}, 1), p["fusion.weight"], p["fusion.bias"]));
    return ad::add(player, ad::mul(gate, ad::sub(rally, player)));
}

HeadOutputs apply_heads(Var fused, std::span<const int> next_player, const ParamVars& p,
                        const DropoutContext& dropout) {
    const Var target_player = ad::embedding_lookup(p["embed.player"], next_player);
    const Var x = dropout.apply(ad::add(fused, target_player));
    return {affine(x, p["head.type.weight"], p["head.type.bias"]), affine(x, p["head.area.weight"], p["head.area.bias"])};
}

GaussianVars gaussian_params(Var area_raw) {
    auto col = [&](std::size_t i) { return ad::slice(area_raw, 1, i, i + 1); };
    auto bounded = [](Var x) { return ad::scale(ad::tanh(ad::scale(x, 1.0 / kLogSigmaBound)), kLogSigmaBound); };
    return {col(0), col(1), bounded(col(2)), bounded(col(3)), ad::scale(ad::tanh(col(4)), kRhoBound)};
}

std::vector<PredictionStep> decode_heads(const HeadOutputs& heads, std::size_t first_row) {
    Tape scratch(false);
    const Array probs = ad::softmax(scratch.input(heads.type_logits.value()), 1).value();
    const GaussianVars g = gaussian_params(scratch.input(heads.area.value()));
    const std::size_t rows = probs.dim(0);
    const std::size_t v = probs.dim(1);
    std::vector<PredictionStep> steps;
    for (std::size_t r = first_row; r < rows; ++r) {
        PredictionStep s;
        s.type_probs.assign(probs.data() + r * v, probs.data() + (r + 1) * v);
        s.mu_x = g.mu_x.value()[r];
        s.mu_y = g.mu_y.value()[r];
        s.sigma_x = std::exp(g.log_sigma_x.value()[r]);
        s.sigma_y = std::exp(g.log_sigma_y.value()[r]);
        s.rho = g.rho.value()[r];
        steps.push_back(std::move(s));
    }
    return steps;
}

PredictionStep predict_step(std::span<const double> fused, int next_player_row, const ModelParams& params) {
    Tape tape(false);
    const ParamVars p(tape, params);
    const Var x = tape.input(Array(Shape{1, fused.size()}, std::vector<double>(fused.begin(), fused.end())));
    const int row[1] = {next_player_row};
    return decode_heads(apply_heads(x, row, p, DropoutContext{}), 0).front();
}

ForwardGraph build_forward(Tape& tape, const ParamVars& p, const ModelConfig& config, const StrokeSequence& seq,
                           const DropoutContext& dropout) {
    ForwardGraph g;
    g.embedded = embed_strokes(tape, p, config, seq);
    g.contexts = encode_contexts(g.embedded, seq.hitters, p, config, dropout);
    g.fused = fuse_contexts(g.contexts.rally, g.contexts.player, g.embedded.position, p);
    g.heads = apply_heads(g.fused, seq.next_player_ids, p, dropout);
    return g;
}

std::vector<PredictionStep> forward_teacher_forced(const Rally& rally, const ModelParams& params,
                                                   const ModelConfig& config, const PlayerIndex& players,
                                                   const CourtSpec& court, Rng* dropout_rng) {
    const auto tau = static_cast<std::size_t>(config.tau);
    if (rally.size() < tau + 1) {
        throw InputError("rally " + rally.key() + " has " + std::to_string(rally.size()) + " strokes; need at least " +
                         std::to_string(tau + 1));
    }
    Tape tape(dropout_rng != nullptr);
    const ParamVars p(tape, params);
    const StrokeSequence seq = make_sequence(rally, rally.size() - 1, players, court);
    const ForwardGraph g = build_forward(tape, p, config, seq, DropoutContext{config.dropout_rate, dropout_rng});
    return decode_heads(g.heads, tau - 1);
}

}  // namespace strokecast
