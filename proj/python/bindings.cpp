#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "strokecast/analysis.hpp"
#include "strokecast/dataset.hpp"
#include "strokecast/errors.hpp"
#include "strokecast/model.hpp"
#include "strokecast/sampler.hpp"
#include "strokecast/scoring.hpp"
#include "strokecast/trainer.hpp"

namespace py = pybind11;
using namespace strokecast;

namespace {

Player player_from(const std::string& s) {
    if (s == "A" || s == "a") return Player::A;
    if (s == "B" || s == "b") return Player::B;
    throw InputError("player must be 'A' or 'B', got '" + s + "'");
}

std::vector<Rally> load_dataset(const std::string& path) {
    return parse_dataset(path, ShotTypeVocab::default_vocab()).rallies;
}

std::vector<Rally> synthesize(std::size_t n, std::uint64_t seed, std::size_t players, double mean_length,
                              std::size_t rallies_per_match) {
    const auto vocab = ShotTypeVocab::default_vocab();
    SynthConfig cfg;
    cfg.n_rallies = n;
    cfg.seed = seed;
    cfg.mean_length = mean_length;
    cfg.rallies_per_match = rallies_per_match;
    cfg.player_styles = default_player_styles(vocab, CourtSpec{}, players);
    return synthesize_dataset(cfg, vocab, CourtSpec{});
}

py::list report_rows(const TrainReport& report) {
    py::list rows;
    for (const auto& e : report.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["shot_loss"] = e.shot_loss;
        d["area_loss"] = e.area_loss;
        d["total_loss"] = e.total_loss;
        d["val_score"] = e.val_score ? py::cast(*e.val_score) : py::none();
        rows.append(d);
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Badminton stroke forecasting core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Stroke>(m, "Stroke")
        .def_readonly("round_index", &Stroke::round_index)
        .def_property_readonly("player", [](const Stroke& s) { return std::string(1, to_char(s.player)); })
        .def_readonly("shot_type", &Stroke::shot_type)
        .def_property_readonly("landing", [](const Stroke& s) { return py::make_tuple(s.landing.x, s.landing.y); })
        .def_property_readonly("player_location",
                               [](const Stroke& s) { return py::make_tuple(s.player_location.x, s.player_location.y); });

    py::class_<Rally>(m, "Rally")
        .def_readonly("match_id", &Rally::match_id)
        .def_readonly("rally_id", &Rally::rally_id)
        .def_readonly("player_a", &Rally::player_a)
        .def_readonly("player_b", &Rally::player_b)
        .def_readonly("strokes", &Rally::strokes)
        .def_property_readonly("key", &Rally::key)
        .def("__len__", &Rally::size)
        .def("__repr__", [](const Rally& r) {
            return "<Rally " + r.key() + " with " + std::to_string(r.size()) + " strokes>";
        });

    m.def("shot_types", [] {
        const ShotTypeVocab vocab = ShotTypeVocab::default_vocab();
        std::vector<std::string> names;
        for (const auto& t : vocab.entries()) names.push_back(t.name);
        return names;
    }, "Names of the default shot-type vocabulary in id order.");

    m.def("coord_to_zone", [](double x, double y, const std::string& receiver) {
        return coord_to_zone({x, y}, CourtSpec{}, player_from(receiver)).value();
    }, py::arg("x"), py::arg("y"), py::arg("receiver"),
       "Zone 1-9 on the receiver's half of a standard court, 10 when outside it.");

    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("write_dataset", [](const std::string& path, const std::vector<Rally>& rallies) {
        write_dataset(path, rallies, ShotTypeVocab::default_vocab(), CourtSpec{});
    }, py::arg("path"), py::arg("rallies"));
    m.def("synthesize", &synthesize, py::arg("n"), py::arg("seed") = 0, py::arg("players") = 4,
          py::arg("mean_length") = 10.0, py::arg("rallies_per_match") = 8);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
        .def_readwrite("dropout_rate", &ModelConfig::dropout_rate)
        .def_property("embedding_mode",
                      [](const ModelConfig& c) { return to_string(c.embedding_mode); },
                      [](ModelConfig& c, const std::string& s) { c.embedding_mode = parse_embedding_mode(s); });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("grad_clip", &TrainConfig::grad_clip)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("eval_samples", &TrainConfig::eval_samples)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("jobs", &TrainConfig::jobs);

    py::class_<Forecaster>(m, "Forecaster")
        .def_readonly("config", &Forecaster::config)
        .def("save", [](const Forecaster& f, const std::string& path) { save_checkpoint(path, f); })
        .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
        .def("evaluate", [](const Forecaster& f, const std::vector<Rally>& rallies) {
            const LossTerms l = evaluate_teacher_forced(f, rallies);
            return py::dict(py::arg("shot_loss") = l.shot, py::arg("area_loss") = l.area,
                            py::arg("total_loss") = l.total);
        }, py::arg("rallies"), "Teacher-forced mean losses.")
        .def("best_of_k", [](const Forecaster& f, const std::vector<Rally>& rallies, std::size_t k,
                             std::uint64_t seed, std::size_t jobs) {
            py::gil_scoped_release release;
            return eval_best_of_k(f, rallies, k, seed, jobs).score;
        }, py::arg("rallies"), py::arg("k"), py::arg("seed") = 0, py::arg("jobs") = 1)
        .def("predict", [](const Forecaster& f, const std::vector<Rally>& rallies, std::size_t samples,
                           std::uint64_t seed, std::size_t jobs) {
            py::gil_scoped_release release;
            return generate_predictions(f, rallies, samples, seed, jobs);
        }, py::arg("rallies"), py::arg("samples") = 6, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def("train", [](const std::vector<Rally>& rallies, const std::vector<Rally>& validation,
                      const ModelConfig& model, const TrainConfig& config) {
        TrainResult r = [&] {
            py::gil_scoped_release release;
            return train(rallies, validation, model, config, ShotTypeVocab::default_vocab());
        }();
        return py::make_tuple(std::move(r.model), report_rows(r.report));
    }, py::arg("rallies"), py::arg("validation") = std::vector<Rally>{}, py::arg("model") = ModelConfig{},
       py::arg("config") = TrainConfig{}, "Returns (forecaster, per-epoch report rows).");

    py::class_<PredictionFile>(m, "PredictionFile")
        .def_readonly("type_names", &PredictionFile::type_names)
        .def_property_readonly("n_sets", [](const PredictionFile& f) { return f.sets.size(); })
        .def("write", [](const PredictionFile& f, const std::string& path) { write_predictions(path, f); })
        .def_static("read", [](const std::string& path) {
            return read_predictions(path, ShotTypeVocab::default_vocab());
        })
        .def("__eq__", [](const PredictionFile& a, const PredictionFile& b) { return a == b; });

    py::class_<ScoreReport>(m, "ScoreReport")
        .def_readonly("set_losses", &ScoreReport::set_losses)
        .def_readonly("score", &ScoreReport::score)
        .def_readonly("best_set", &ScoreReport::best_set)
        .def_readonly("n_strokes", &ScoreReport::n_strokes)
        .def_readonly("per_round", &ScoreReport::per_round);

    m.def("score", [](const PredictionFile& f, const std::vector<Rally>& truth) {
        return score_predictions(f, truth, CourtSpec{});
    }, py::arg("predictions"), py::arg("truth"));
    m.def("score_min6", [](const std::vector<double>& losses) { return score_min6(losses); });

    m.def("round_trend", [](const PredictionFile& f) {
        const RoundTrend t = round_trend(f);
        py::dict out;
        for (const auto& [round, probs] : t.mean_probs) {
            py::dict row;
            for (std::size_t i = 0; i < probs.size(); ++i) row[py::str(t.type_names[i])] = probs[i];
            out[py::int_(round)] = row;
        }
        return out;
    }, "Mean predicted type distribution per ball round.");
}
