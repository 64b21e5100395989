#include "cifrank/ltr.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "cifrank/counterfactual.hpp"
#include "cifrank/error.hpp"
#include "cifrank/random.hpp"

namespace cifrank {

using nlohmann::json;

namespace {

std::vector<double> softmax(std::span<const double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - hi);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> feature_matrix(const Dataset& data,
                                   std::span<const std::string> features) {
  const std::size_t n = data.size();
  const std::size_t p = features.size();
  std::vector<double> out(n * p);
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = data.column(features[j]);
    for (std::size_t i = 0; i < n; ++i) out[i * p + j] = col[i];
  }
  return out;
}

std::vector<double> linear_scores(std::span<const double> features,
                                  std::span<const double> weights) {
  const std::size_t p = weights.size();
  const std::size_t n = p == 0 ? 0 : features.size() / p;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) out[i] += features[i * p + j] * weights[j];
  }
  return out;
}

std::vector<std::string> eligible_mediators(const CausalModelSpec& spec) {
  std::vector<std::string> out;
  const auto outcome = spec.outcome();
  if (!outcome) return out;
  const auto descendants = spec.sensitive_descendants();
  const auto ancestors = spec.ancestors(*outcome);
  for (const auto& v : spec.vertices) {
    if (v.role == Role::kMediator && descendants.count(v.name) &&
        ancestors.count(v.name)) {
      out.push_back(v.name);
    }
  }
  return out;
}

bool is_cf(PipelineVariant v) {
  return v == PipelineVariant::kNonResolvingCfLtr ||
         v == PipelineVariant::kResolvingCfLtr;
}

bool is_resolving(PipelineVariant v) {
  return v == PipelineVariant::kResolvingLtr ||
         v == PipelineVariant::kResolvingCfLtr;
}

constexpr std::uint64_t kTruthSeedSalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

double ListwiseModel::score(const Dataset& data, std::size_t row) const {
  double s = bias;
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    s += weights[j] * data.value(row, feature_names[j]);
  }
  return s;
}

std::vector<double> ListwiseModel::scores(const Dataset& data) const {
  for (const auto& f : feature_names) {
    if (!data.schema().index_of(f)) {
      throw DataError("feature '" + f + "' is missing from the data");
    }
  }
  const auto x = feature_matrix(data, feature_names);
  auto s = linear_scores(x, weights);
  if (feature_names.empty()) s.assign(data.size(), 0.0);
  for (double& v : s) v += bias;
  return s;
}

double listwise_loss(std::span<const double> predicted,
                     std::span<const double> target) {
  if (predicted.size() != target.size() || predicted.empty()) {
    throw DataError("listwise loss needs equally sized, non-empty lists");
  }
  const auto q = softmax(target);
  const double hi = *std::max_element(predicted.begin(), predicted.end());
  double sum = 0.0;
  for (double s : predicted) sum += std::exp(s - hi);
  const double log_norm = hi + std::log(sum);
  double loss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    loss -= q[i] * (predicted[i] - log_norm);
  }
  return loss;
}

std::vector<double> listwise_gradient(std::span<const double> features,
                                      std::span<const double> weights,
                                      std::span<const double> target) {
  const std::size_t p = weights.size();
  const std::size_t n = target.size();
  if (features.size() != n * p) {
    throw DataError("feature matrix does not match the list length");
  }
  std::vector<double> scores = linear_scores(features, weights);
  if (p == 0) scores.assign(n, 0.0);
  const auto pred = softmax(scores);
  const auto q = softmax(target);
  std::vector<double> grad(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred[i] - q[i];
    for (std::size_t j = 0; j < p; ++j) grad[j] += diff * features[i * p + j];
  }
  return grad;
}

ListwiseModel train_listwise(const Dataset& train, std::span<const double> target,
                             std::span<const std::string> features,
                             const Hyperparams& params) {
  if (train.size() < 2) throw DataError("training needs at least 2 records");
  if (target.size() != train.size()) {
    throw DataError("target length does not match the training data");
  }
  for (const auto& f : features) {
    if (!train.schema().index_of(f)) {
      throw DataError("feature '" + f + "' is missing from the training data");
    }
  }
  if (!(params.learning_rate > 0.0)) {
    throw ConfigError("learning rate must be positive");
  }
  const auto x = feature_matrix(train, features);
  ListwiseModel model;
  model.feature_names.assign(features.begin(), features.end());
  model.weights.assign(features.size(), 0.0);
  model.meta.learning_rate = params.learning_rate;

  auto loss_at = [&](const std::vector<double>& w) {
    auto s = linear_scores(x, w);
    if (w.empty()) s.assign(train.size(), 0.0);
    return listwise_loss(s, target);
  };
  double loss = loss_at(model.weights);
  std::size_t epoch = 0;
  while (epoch < params.epochs) {
    const auto grad = listwise_gradient(x, model.weights, target);
    for (std::size_t j = 0; j < grad.size(); ++j) {
      model.weights[j] -= params.learning_rate * grad[j];
    }
    ++epoch;
    const double next = loss_at(model.weights);
    if (!std::isfinite(next)) {
      throw NumericalError("listwise training diverged at epoch " +
                           std::to_string(epoch));
    }
    const double change = std::fabs(loss - next);
    loss = next;
    if (change <= params.tolerance * std::fabs(loss)) break;
  }
  model.meta.epochs = epoch;
  model.meta.final_loss = loss;
  return model;
}

Ranking predict_ranking(const ListwiseModel& model, const Dataset& data,
                        std::uint64_t seed) {
  const auto s = model.scores(data);
  return rank_scores(s, Direction::kDescending, seed, "ltr_score");
}

json to_json(const ListwiseModel& model) {
  return {{"features", model.feature_names},
          {"weights", model.weights},
          {"bias", model.bias},
          {"meta",
           {{"epochs", model.meta.epochs},
            {"learning_rate", model.meta.learning_rate},
            {"final_loss", model.meta.final_loss}}}};
}

ListwiseModel listwise_model_from_json(const json& doc) {
  ListwiseModel model;
  try {
    model.feature_names = doc.at("features").get<std::vector<std::string>>();
    model.weights = doc.at("weights").get<std::vector<double>>();
    model.bias = doc.value("bias", 0.0);
    if (doc.contains("meta")) {
      const json& meta = doc.at("meta");
      model.meta.epochs = meta.value("epochs", std::size_t{0});
      model.meta.learning_rate = meta.value("learning_rate", 0.0);
      model.meta.final_loss = meta.value("final_loss", 0.0);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ranker model: ") + e.what());
  }
  if (model.weights.size() != model.feature_names.size()) {
    throw ConfigError("ranker model has " + std::to_string(model.weights.size()) +
                      " weights for " +
                      std::to_string(model.feature_names.size()) + " features");
  }
  for (double w : model.weights) {
    if (!std::isfinite(w)) throw ConfigError("ranker model has a non-finite weight");
  }
  return model;
}

std::string_view to_string(PipelineVariant variant) {
  switch (variant) {
    case PipelineVariant::kOriginal: return "original";
    case PipelineVariant::kNonResolvingLtr: return "non_resolving_ltr";
    case PipelineVariant::kNonResolvingCfLtr: return "non_resolving_cf_ltr";
    case PipelineVariant::kResolvingLtr: return "resolving_ltr";
    case PipelineVariant::kResolvingCfLtr: return "resolving_cf_ltr";
  }
  return "original";
}

PipelineVariant parse_pipeline_variant(std::string_view text) {
  for (PipelineVariant v : all_pipeline_variants()) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown pipeline variant '" + std::string(text) + "'");
}

std::vector<PipelineVariant> all_pipeline_variants() {
  return {PipelineVariant::kOriginal, PipelineVariant::kNonResolvingLtr,
          PipelineVariant::kNonResolvingCfLtr, PipelineVariant::kResolvingLtr,
          PipelineVariant::kResolvingCfLtr};
}

void PipelineConfig::validate() const {
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1)");
  }
  if (split_count < 1) throw ConfigError("split count must be at least 1");
  if (k_values.empty()) throw ConfigError("at least one k value is required");
}

std::vector<std::string> ltr_features(const CausalModelSpec& spec,
                                      bool include_sensitive) {
  std::vector<std::string> out;
  for (const auto& v : spec.vertices) {
    if (v.latent || v.role == Role::kOutcome) continue;
    if (v.role == Role::kSensitive && !include_sensitive) continue;
    out.push_back(v.name);
  }
  return out;
}

CausalModelSpec with_resolving(const CausalModelSpec& spec, bool resolving) {
  CausalModelSpec out = spec;
  out.resolving.clear();
  for (const auto& name : eligible_mediators(spec)) out.resolving[name] = resolving;
  return out;
}

PipelineResult run_pipeline(const Dataset& train, const Dataset& test,
                            const CausalModelSpec& spec,
                            const PipelineConfig& cfg) {
  cfg.validate();
  const auto outcome = spec.outcome();
  if (!outcome) throw ConfigError("model has no outcome variable");
  const auto features = ltr_features(spec, cfg.include_sensitive_features);
  const std::uint64_t truth_seed = cfg.seed ^ kTruthSeedSalt;

  Dataset train_used = train;
  Dataset test_used = test;
  Dataset test_truth = test;
  if (cfg.variant != PipelineVariant::kOriginal) {
    const CausalModelSpec model_spec =
        with_resolving(spec, is_resolving(cfg.variant));
    const FittedModel fitted = fit_model(train, model_spec);
    const GroupKey baseline =
        cfg.baseline ? *cfg.baseline : default_baseline(model_spec);
    train_used = transform_dataset(
        train, CounterfactualConfig{baseline, fitted, ResidualSource::kStored});
    const FittedModel restored = fitted_model_from_json(to_json(fitted));
    test_truth = transform_dataset(
        test,
        CounterfactualConfig{baseline, restored, ResidualSource::kRecomputed});
    if (is_cf(cfg.variant)) test_used = test_truth;
  }

  PipelineResult result;
  result.model = train_listwise(train_used, train_used.column(*outcome),
                                features, cfg.hyperparams);
  result.test_ranking = predict_ranking(result.model, test_used, cfg.seed);
  result.ground_truth =
      rank_by_score(test_truth, *outcome, Direction::kDescending, truth_seed);
  const Ranking observed =
      rank_by_score(test, *outcome, Direction::kDescending, truth_seed);

  EvaluationInputs inputs;
  inputs.data = &test;
  inputs.score_column = *outcome;
  inputs.sensitive = spec.sensitive;
  inputs.k_values = cfg.k_values;
  inputs.original = &observed;
  inputs.ground_truth = &result.ground_truth;
  result.report = evaluate(result.test_ranking, inputs,
                           std::string(to_string(cfg.variant)));
  return result;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double fraction,
                                          std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_train =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw DataError("dataset of " + std::to_string(n) +
                    " records is too small to split");
  }
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(rows[i - 1], rows[static_cast<std::size_t>(rng.below(i))]);
  }
  std::vector<std::size_t> train_rows(rows.begin(),
                                      rows.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_rows(rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                                     rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

std::vector<SummaryRow> summarize(std::span<const MetricReport> reports) {
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>>
      values;
  for (const MetricReport& report : reports) {
    for (std::size_t k : report.k_values) {
      const GlobalMetrics& g = report.global.at(k);
      if (g.average_precision) {
        values[{"average_precision", "", k}].push_back(*g.average_precision);
      }
      if (g.y_utility_loss) {
        values[{"y_utility_loss", "", k}].push_back(*g.y_utility_loss);
      }
      for (const auto& key : report.groups) {
        const GroupMetrics& cell = report.per_group.at({key, k});
        values[{"selection_rate", key.label(), k}].push_back(cell.selection_rate);
        if (cell.sensitivity) {
          values[{"sensitivity", key.label(), k}].push_back(*cell.sensitivity);
        }
      }
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, v] : values) {
    SummaryRow row;
    std::tie(row.metric, row.group, row.k) = key;
    row.count = v.size();
    row.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - row.mean) * (x - row.mean);
      row.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(std::span<const SummaryRow> rows) {
  json out = json::array();
  for (const auto& row : rows) {
    out.push_back({{"metric", row.metric},
                   {"group", row.group},
                   {"k", row.k},
                   {"count", row.count},
                   {"mean", row.mean},
                   {"stddev", row.stddev ? json(*row.stddev) : json(nullptr)}});
  }
  return out;
}

}  // namespace cifrank
