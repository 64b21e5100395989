#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cifrank/app.hpp"
#include "cifrank/counterfactual.hpp"
#include "cifrank/error.hpp"
#include "cifrank/estimation.hpp"
#include "cifrank/ltr.hpp"
#include "cifrank/metrics.hpp"
#include "cifrank/ranking.hpp"
#include "cifrank/synthgen.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Columns = std::map<std::string, std::vector<double>>;

cifrank::CausalModelSpec spec_or_default(const std::optional<std::string>& spec_json) {
  if (!spec_json) return cifrank::moving_company_model(false);
  try {
    return cifrank::spec_from_json(json::parse(*spec_json));
  } catch (const json::parse_error& e) {
    throw cifrank::ConfigError(std::string("model spec is not valid JSON: ") + e.what());
  }
}

cifrank::Dataset to_dataset(const Columns& columns, const cifrank::CausalModelSpec& spec) {
  cifrank::Schema schema = cifrank::Schema::from_model(spec);
  std::vector<std::vector<double>> data;
  for (const auto& c : schema.columns) {
    const auto it = columns.find(c.name);
    if (it == columns.end()) throw cifrank::DataError("missing column '" + c.name + "'");
    data.push_back(it->second);
  }
  return cifrank::Dataset(std::move(schema), std::move(data));
}

Columns to_columns(const cifrank::Dataset& data) {
  Columns out;
  for (const auto& c : data.schema().columns) {
    const auto col = data.column(c.name);
    out[c.name].assign(col.begin(), col.end());
  }
  return out;
}

cifrank::Ranking as_ranking(const std::vector<std::size_t>& order) {
  cifrank::Ranking r;
  r.order = order;
  return r;
}

cifrank::Direction direction_of(bool descending) {
  return descending ? cifrank::Direction::kDescending : cifrank::Direction::kAscending;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Counterfactually fair ranking over structural causal models";

  auto base = py::register_exception<cifrank::Error>(m, "CifrankError");
  py::register_exception<cifrank::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<cifrank::DataError>(m, "DataError", base.ptr());
  py::register_exception<cifrank::NumericalError>(m, "NumericalError", base.ptr());

  m.def("preset_names", &cifrank::preset_names);

  m.def(
      "generate",
      [](const std::string& preset, std::size_t n, std::uint64_t seed) {
        auto cfg = cifrank::preset(preset);
        cfg.n = n;
        cfg.seed = seed;
        return to_columns(cifrank::generate(cfg));
      },
      py::arg("preset") = "moving", py::arg("n") = 2000, py::arg("seed") = 0,
      "Synthetic moving-company data as a dict of columns G, R, X, Y.");

  m.def(
      "moving_company_model",
      [](bool resolving_x) { return cifrank::to_json(cifrank::moving_company_model(resolving_x)).dump(); },
      py::arg("resolving_x") = false, "Model spec JSON for the moving company graph.");

  m.def(
      "fit",
      [](const Columns& columns, const std::optional<std::string>& spec_json) {
        const auto spec = spec_or_default(spec_json);
        return cifrank::to_json(cifrank::fit_model(to_dataset(columns, spec), spec)).dump();
      },
      py::arg("columns"), py::arg("spec") = py::none(),
      "Fits the structural equations; returns the fitted model as JSON.");

  m.def(
      "counterfactual",
      [](const Columns& columns, const std::optional<std::string>& spec_json,
         const std::optional<std::string>& baseline) {
        const auto spec = spec_or_default(spec_json);
        const auto data = to_dataset(columns, spec);
        const auto model = cifrank::fit_model(data, spec);
        const auto key = baseline ? cifrank::parse_group_key(*baseline, spec.sensitive)
                                  : cifrank::default_baseline(spec);
        return to_columns(cifrank::transform_dataset(
            data, {key, model, cifrank::ResidualSource::kStored}));
      },
      py::arg("columns"), py::arg("spec") = py::none(), py::arg("baseline") = py::none(),
      "Fits the model and maps every record to the baseline group.");

  m.def(
      "rank",
      [](const std::vector<double>& scores, bool descending, std::uint64_t seed) {
        return cifrank::rank_scores(scores, direction_of(descending), seed).order;
      },
      py::arg("scores"), py::arg("descending") = true, py::arg("seed") = 0,
      "Row indices in rank order; ties are shuffled with the seed.");

  m.def(
      "quota_ranking",
      [](const Columns& columns, const std::string& score, const std::string& attribute,
         std::size_t k, bool descending, std::uint64_t seed,
         const std::optional<std::string>& spec_json) {
        const auto spec = spec_or_default(spec_json);
        return cifrank::quota_ranking(to_dataset(columns, spec), score, attribute, k,
                                      direction_of(descending), seed)
            .order;
      },
      py::arg("columns"), py::arg("score"), py::arg("attribute"), py::arg("k"),
      py::arg("descending") = true, py::arg("seed") = 0, py::arg("spec") = py::none());

  m.def(
      "evaluate",
      [](const Columns& columns, const std::vector<std::size_t>& ranking,
         const std::vector<std::size_t>& k_values, const std::optional<std::string>& score,
         const std::optional<std::vector<std::size_t>>& original,
         const std::optional<std::vector<std::size_t>>& truth,
         const std::optional<std::string>& spec_json) {
        const auto spec = spec_or_default(spec_json);
        const auto data = to_dataset(columns, spec);
        const auto orig = original ? std::optional(as_ranking(*original)) : std::nullopt;
        const auto gt = truth ? std::optional(as_ranking(*truth)) : std::nullopt;
        cifrank::EvaluationInputs in;
        in.data = &data;
        in.score_column = score ? *score : spec.outcome().value_or("");
        in.sensitive = spec.sensitive;
        in.k_values = k_values;
        in.original = orig ? &*orig : nullptr;
        in.ground_truth = gt ? &*gt : nullptr;
        return cifrank::to_json(cifrank::evaluate(as_ranking(ranking), in)).dump();
      },
      py::arg("columns"), py::arg("ranking"), py::arg("k_values"),
      py::arg("score") = py::none(), py::arg("original") = py::none(),
      py::arg("truth") = py::none(), py::arg("spec") = py::none(),
      "Metric report as JSON.");

  m.def(
      "listwise_loss",
      [](const std::vector<double>& predicted, const std::vector<double>& target) {
        return cifrank::listwise_loss(predicted, target);
      },
      py::arg("predicted"), py::arg("target"));

  m.def(
      "listwise_gradient",
      [](const std::vector<double>& features, const std::vector<double>& weights,
         const std::vector<double>& target) {
        return cifrank::listwise_gradient(features, weights, target);
      },
      py::arg("features"), py::arg("weights"), py::arg("target"),
      "Gradient for a linear scorer; features are row-major.");

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& base_dir) {
        const auto cfg = cifrank::experiment_from_json(json::parse(config_json), base_dir);
        py::gil_scoped_release release;
        cifrank::cmd_run(cfg);
      },
      py::arg("config"), py::arg("base_dir") = "",
      "Runs the fit/transform/rank/evaluate pipeline from an experiment config (JSON).");

  m.def(
      "run_ltr",
      [](const std::string& config_json, const std::string& base_dir) {
        const auto cfg = cifrank::experiment_from_json(json::parse(config_json), base_dir);
        py::gil_scoped_release release;
        cifrank::cmd_ltr(cfg);
      },
      py::arg("config"), py::arg("base_dir") = "",
      "Runs the learning-to-rank pipelines from an experiment config (JSON).");
}
