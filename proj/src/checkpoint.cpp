#include <cstdio>
#include <fstream>
#include <sstream>

#include "strokecast/csv.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/model.hpp"

namespace strokecast {

namespace {

constexpr const char* kMagic = "strokecast-checkpoint 1";

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_hex(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') throw InputError("checkpoint: bad number '" + token + "'");
    return v;
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::string next() {
        std::string line;
        if (!std::getline(in_, line)) throw InputError("checkpoint: unexpected end of file");
        ++lineno_;
        return csv::trim_cr(std::move(line));
    }

    // Reads `<keyword> <rest>` and returns rest.
    std::string expect(const std::string& keyword) {
        const std::string line = next();
        if (line.rfind(keyword + " ", 0) != 0) {
            throw InputError("checkpoint line " + std::to_string(lineno_) + ": expected '" + keyword + "'");
        }
        return line.substr(keyword.size() + 1);
    }

    std::size_t count(const std::string& keyword) {
        const auto n = csv::parse_int(expect(keyword));
        if (!n || *n < 0) throw InputError("checkpoint: bad count for " + keyword);
        return static_cast<std::size_t>(*n);
    }

private:
    std::istream& in_;
    std::size_t lineno_ = 0;
};

int parse_int_field(const std::string& text) {
    const auto v = csv::parse_int(text);
    if (!v) throw InputError("checkpoint: bad integer '" + text + "'");
    return static_cast<int>(*v);
}

}  // namespace

void save_checkpoint(std::ostream& out, const Forecaster& m) {
    const ModelConfig& c = m.config;
    out << kMagic << '\n';
    out << "config embed_dim " << c.embed_dim << '\n';
    out << "config n_heads " << c.n_heads << '\n';
    out << "config n_layers " << c.n_layers << '\n';
    out << "config ffn_dim " << c.ffn_dim << '\n';
    out << "config dropout_rate " << hex(c.dropout_rate) << '\n';
    out << "config vocab_size " << c.vocab_size << '\n';
    out << "config n_players " << c.n_players << '\n';
    out << "config embedding_mode " << to_string(c.embedding_mode) << '\n';
    out << "config tau " << c.tau << '\n';
    out << "court width_m " << hex(m.court.width_m) << '\n';
    out << "court length_m " << hex(m.court.length_m) << '\n';
    out << "court mean_x " << hex(m.court.mean_x) << '\n';
    out << "court mean_y " << hex(m.court.mean_y) << '\n';
    out << "court std_x " << hex(m.court.std_x) << '\n';
    out << "court std_y " << hex(m.court.std_y) << '\n';
    out << "vocab " << m.vocab.size() << '\n';
    for (const auto& t : m.vocab.entries()) out << (t.is_serve ? 1 : 0) << ' ' << t.name << '\n';
    out << "players " << m.players.size() << '\n';
    for (const auto& name : m.players.names()) out << name << '\n';
    out << "arrays " << m.params.arrays().size() << '\n';
    for (const auto& [name, a] : m.params.arrays()) {
        out << "array " << name << ' ' << a.rank();
        for (std::size_t d : a.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < a.size(); ++i) out << (i ? " " : "") << hex(a[i]);
        out << '\n';
    }
    out << "end\n";
}

void save_checkpoint(const std::string& path, const Forecaster& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    save_checkpoint(out, model);
    if (!out) throw InputError("failed writing checkpoint: " + path);
}

Forecaster load_checkpoint(std::istream& in) {
    LineReader r(in);
    if (r.next() != kMagic) throw InputError("not a strokecast checkpoint");
    Forecaster m;
    ModelConfig& c = m.config;
    c.embed_dim = parse_int_field(r.expect("config embed_dim"));
    c.n_heads = parse_int_field(r.expect("config n_heads"));
    c.n_layers = parse_int_field(r.expect("config n_layers"));
    c.ffn_dim = parse_int_field(r.expect("config ffn_dim"));
    c.dropout_rate = parse_hex(r.expect("config dropout_rate"));
    c.vocab_size = parse_int_field(r.expect("config vocab_size"));
    c.n_players = parse_int_field(r.expect("config n_players"));
    c.embedding_mode = parse_embedding_mode(r.expect("config embedding_mode"));
    c.tau = parse_int_field(r.expect("config tau"));
    c.validate();
    m.court.width_m = parse_hex(r.expect("court width_m"));
    m.court.length_m = parse_hex(r.expect("court length_m"));
    m.court.mean_x = parse_hex(r.expect("court mean_x"));
    m.court.mean_y = parse_hex(r.expect("court mean_y"));
    m.court.std_x = parse_hex(r.expect("court std_x"));
    m.court.std_y = parse_hex(r.expect("court std_y"));
    m.court.validate();

    std::vector<std::pair<std::string, bool>> vocab;
    const std::size_t n_types = r.count("vocab");
    for (std::size_t i = 0; i < n_types; ++i) {
        const std::string line = r.next();
        if (line.size() < 3 || (line[0] != '0' && line[0] != '1') || line[1] != ' ') {
            throw InputError("checkpoint: bad vocabulary line '" + line + "'");
        }
        vocab.emplace_back(line.substr(2), line[0] == '1');
    }
    m.vocab = ShotTypeVocab(std::move(vocab));

    std::vector<std::string> names;
    const std::size_t n_players = r.count("players");
    for (std::size_t i = 0; i < n_players; ++i) names.push_back(r.next());
    m.players = PlayerIndex(std::move(names));

    const std::size_t n_arrays = r.count("arrays");
    for (std::size_t i = 0; i < n_arrays; ++i) {
        std::istringstream header(r.expect("array"));
        std::string name;
        std::size_t rank = 0;
        header >> name >> rank;
        if (!header || rank > kMaxRank) throw InputError("checkpoint: bad array header for " + name);
        Shape shape(rank);
        for (auto& d : shape) header >> d;
        if (!header) throw InputError("checkpoint: bad shape for " + name);
        std::istringstream body(r.next());
        std::vector<double> values;
        std::string token;
        while (body >> token) values.push_back(parse_hex(token));
        m.params.arrays().insert_or_assign(name, Array(shape, std::move(values)));
    }
    if (r.next() != "end") throw InputError("checkpoint: missing 'end'");
    if (m.vocab.size() != c.vocab_size || m.players.size() != c.n_players) {
        throw InputError("checkpoint: vocabulary/player counts disagree with config");
    }
    m.params.check_shapes(c);
    return m;
}

Forecaster load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    return load_checkpoint(in);
}

}  // namespace strokecast
