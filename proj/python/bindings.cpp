#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "srp/analysis.hpp"
#include "srp/bayes.hpp"
#include "srp/chain.hpp"
#include "srp/complexity.hpp"
#include "srp/error.hpp"

namespace py = pybind11;
using namespace srp;

namespace {

std::vector<std::vector<int>> to_rows(const Grid& g) {
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(g.size()));
  for (int r = 0; r < g.size(); ++r)
    for (int c = 0; c < g.size(); ++c) rows[static_cast<std::size_t>(r)].push_back(g.at(r, c));
  return rows;
}

Grid from_rows(const std::vector<std::vector<int>>& rows) {
  const int n = static_cast<int>(rows.size());
  Grid g(n);
  for (int r = 0; r < n; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != n)
      throw Error(ErrorKind::kRaggedRows, "row " + std::to_string(r + 1) + " has the wrong length");
    for (int c = 0; c < n; ++c) {
      const int v = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (v != 0 && v != 1) throw Error(ErrorKind::kMalformedCharacter, "tiles must be 0 or 1");
      g.set(r, c, v == 1);
    }
  }
  return g;
}

py::dict distribution_dict(const GridDistribution& d) {
  py::dict out;
  out["grid_size"] = d.grid_size;
  out["mass"] = d.mass;
  return out;
}

GridDistribution distribution_from(const py::dict& d) {
  return {d["grid_size"].cast<int>(), d["mass"].cast<std::vector<double>>()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grids, complexity measures, Bayesian chain models and statistics.";

  // Messages start with the error kind, e.g. "size-mismatch: ...".
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<Grid>(m, "Grid")
      .def(py::init([](const std::vector<std::vector<int>>& rows) { return from_rows(rows); }), py::arg("rows"))
      .def_property_readonly("size", &Grid::size)
      .def_property_readonly("red_count", &Grid::red_count)
      .def("at", &Grid::at, py::arg("row"), py::arg("col"))
      .def("rows", &to_rows)
      .def("complement", &Grid::complement)
      .def("transposed", &Grid::transposed)
      .def("rotated90", &Grid::rotated90)
      .def("mirrored", &Grid::mirrored)
      .def("flipped", &Grid::flipped, py::arg("row"), py::arg("col"))
      .def("state_index", &Grid::state_index)
      .def_static("from_state_index", &Grid::from_state_index, py::arg("size"), py::arg("index"))
      .def("__eq__", [](const Grid& a, const Grid& b) { return a == b; })
      .def("__hash__", [](const Grid& g) { return GridHash{}(g); })
      .def("__str__", &serialize_grid)
      .def("__repr__", [](const Grid& g) { return "Grid(size=" + std::to_string(g.size()) + ")"; });

  m.def("parse_grid", &parse_grid, py::arg("text"));
  m.def("serialize_grid", &serialize_grid, py::arg("grid"));
  m.def("hamming", &hamming, py::arg("a"), py::arg("b"));
  m.def(
      "random_grid", [](std::uint64_t seed, int size, double p) { return random_grid(seed, size, p); },
      py::arg("seed"), py::arg("size") = kDefaultGridSize, py::arg("p") = 0.5);
  m.def("checkerboard", &checkerboard, py::arg("size"), py::arg("red_at_origin") = true);
  m.def(
      "render_png",
      [](const Grid& g, int cell_px) {
        const auto img = render_image(g, cell_px);
        return py::bytes(reinterpret_cast<const char*>(img.png.data()), img.png.size());
      },
      py::arg("grid"), py::arg("cell_px") = 20);

  m.def("shannon_entropy", &shannon_entropy, py::arg("grid"));
  m.def("local_spatial_complexity", &local_spatial_complexity, py::arg("grid"));

  py::class_<CtmTable>(m, "CtmTable")
      .def_property_readonly("provenance_tag", &CtmTable::provenance_tag)
      .def_property_readonly("source", &CtmTable::source);
  m.def("surrogate_ctm_table", []() { return surrogate_ctm_table(); });
  m.def(
      "load_ctm_table",
      [](const std::filesystem::path& path, bool squares_only) {
        return load_ctm_table(path, squares_only ? square_block_shapes() : all_block_shapes());
      },
      py::arg("path"), py::arg("squares_only") = false);
  m.def(
      "bdm",
      [](const Grid& g, const CtmTable& table, const std::string& convention) {
        return bdm_kc(g, table, parse_boundary_convention(convention));
      },
      py::arg("grid"), py::arg("table"), py::arg("convention") = "maximal");

  py::class_<AbstractionModel>(m, "AbstractionModel")
      .def(py::init([](const std::vector<Grid>& templates, std::vector<double> stimulus_prior,
                       std::vector<double> language_prior, double flip_rate, std::vector<std::string> vocabulary,
                       std::vector<std::vector<double>> description_likelihood) {
             return AbstractionModel(templates, std::move(stimulus_prior), std::move(language_prior), flip_rate,
                                     std::move(vocabulary), std::move(description_likelihood));
           }),
           py::arg("templates"), py::arg("stimulus_prior"), py::arg("language_prior"), py::arg("flip_rate"),
           py::arg("vocabulary"), py::arg("description_likelihood"))
      .def_property_readonly("grid_size", &AbstractionModel::grid_size)
      .def_property_readonly("abstraction_count", &AbstractionModel::abstraction_count)
      .def_property_readonly("flip_rate", &AbstractionModel::flip_rate)
      .def_property_readonly("templates", &AbstractionModel::templates)
      .def_property_readonly("vocabulary", &AbstractionModel::vocabulary)
      .def("to_json", [](const AbstractionModel& a) { return a.to_json().dump(); })
      .def_static("from_json", [](const std::string& s) { return AbstractionModel::from_json(nlohmann::json::parse(s)); });

  m.def("coarse_language_model", &coarse_language_model, py::arg("seed") = 7, py::arg("flip_rate") = 0.05);
  m.def(
      "random_model",
      [](std::uint64_t seed, int grid_size, int abstractions, int vocabulary, double flip_rate, bool aligned) {
        Rng rng(seed);
        return random_model(rng, grid_size, abstractions, vocabulary, flip_rate, aligned);
      },
      py::arg("seed"), py::arg("grid_size"), py::arg("abstractions"), py::arg("vocabulary"), py::arg("flip_rate"),
      py::arg("aligned"));
  m.def(
      "stationary_distribution",
      [](const AbstractionModel& a, const std::string& mode) {
        const auto kernel = parse_chain_mode(mode) == ChainMode::kUnimodal ? unimodal_transition(a)
                                                                            : multimodal_transition(a);
        return distribution_dict(stationary_distribution(kernel));
      },
      py::arg("model"), py::arg("mode"));
  m.def(
      "prior_predictive",
      [](const AbstractionModel& a, bool language) {
        return distribution_dict(prior_predictive(a, language ? PriorKind::kLanguage : PriorKind::kStimulus));
      },
      py::arg("model"), py::arg("language") = false);
  m.def(
      "tv_distance", [](const py::dict& p, const py::dict& q) { return tv_distance(distribution_from(p), distribution_from(q)); },
      py::arg("p"), py::arg("q"));

  // Records cross the boundary as their JSON text so Python sees the same
  // schema as the exported files.
  m.def(
      "simulate_batch",
      [](const AbstractionModel& a, int chains, const std::string& mode, std::uint64_t seed, int steps, int workers) {
        SimulatedBackend backend{BayesianAgent(a)};
        BatchOptions opts;
        opts.workers = workers;
        opts.config.steps = steps;
        opts.config.grid_size = a.grid_size();
        std::vector<ChainRecord> records;
        {
          py::gil_scoped_release release;
          records = batch_run(backend, chains, parse_chain_mode(mode), seed, opts);
        }
        std::vector<std::string> out;
        for (const auto& r : records) out.push_back(to_json(r).dump());
        return out;
      },
      py::arg("model"), py::arg("chains"), py::arg("mode"), py::arg("seed"), py::arg("steps") = 10,
      py::arg("workers") = 1);
  m.def(
      "mean_board_complexity",
      [](const std::vector<std::string>& records, const std::string& metric) {
        std::vector<ChainRecord> parsed;
        for (const auto& r : records) parsed.push_back(record_from_json(nlohmann::json::parse(r)));
        std::vector<double> out;
        for (const auto& c : mean_board_complexity(parsed, parse_metric(metric))) out.push_back(c.mean);
        return out;
      },
      py::arg("records"), py::arg("metric"));

  m.def(
      "pooled_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = pooled_t_test(a, b);
        py::dict out;
        out["t"] = r.t;
        out["df"] = r.df;
        out["p"] = r.p;
        out["mean_a"] = r.mean_a;
        out["mean_b"] = r.mean_b;
        return out;
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "two_way_anova",
      [](const std::vector<double>& values, const std::vector<std::string>& a, const std::vector<std::string>& b) {
        const auto r = two_way_anova(values, a, b);
        py::dict out;
        for (const auto* e : {&r.a, &r.b, &r.interaction}) {
          py::dict d;
          d["ss"] = e->ss;
          d["df"] = e->df;
          d["f"] = e->f;
          d["p"] = e->p;
          out[py::str(e->name)] = d;
        }
        out["ss_error"] = r.ss_error;
        out["df_error"] = r.df_error;
        out["ss_total"] = r.ss_total;
        return out;
      },
      py::arg("values"), py::arg("factor_a"), py::arg("factor_b"));
}
