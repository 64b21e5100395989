#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cifrank/dataset.hpp"
#include "cifrank/estimation.hpp"
#include "cifrank/metrics.hpp"
#include "cifrank/ranking.hpp"
#include "cifrank/scm.hpp"

namespace cifrank {

struct TrainingMeta {
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  double final_loss = 0.0;
};

// Linear scorer s(x) = w.x + b.
struct ListwiseModel {
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  double bias = 0.0;
  TrainingMeta meta;

  double score(const Dataset& data, std::size_t row) const;
  std::vector<double> scores(const Dataset& data) const;
};

struct Hyperparams {
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  // Stops when |loss change| <= tolerance * |loss|.
  double tolerance = 1e-8;
};

// Top-one cross entropy: -sum_i softmax(target)_i * log softmax(predicted)_i.
double listwise_loss(std::span<const double> predicted,
                     std::span<const double> target);

// Gradient of the loss of a linear scorer with respect to its weights.
// `features` is row-major, rows x weights.size().
std::vector<double> listwise_gradient(std::span<const double> features,
                                      std::span<const double> weights,
                                      std::span<const double> target);

// Full-list gradient descent from zero weights. The bias does not affect the
// loss and stays 0. Throws NumericalError naming the epoch if the loss stops
// being finite.
ListwiseModel train_listwise(const Dataset& train, std::span<const double> target,
                             std::span<const std::string> features,
                             const Hyperparams& params = {});

Ranking predict_ranking(const ListwiseModel& model, const Dataset& data,
                        std::uint64_t seed);

nlohmann::json to_json(const ListwiseModel& model);
ListwiseModel listwise_model_from_json(const nlohmann::json& doc);

enum class PipelineVariant {
  kOriginal,
  kNonResolvingLtr,
  kNonResolvingCfLtr,
  kResolvingLtr,
  kResolvingCfLtr,
};

std::string_view to_string(PipelineVariant variant);
PipelineVariant parse_pipeline_variant(std::string_view text);
std::vector<PipelineVariant> all_pipeline_variants();

struct PipelineConfig {
  PipelineVariant variant = PipelineVariant::kOriginal;
  double split_fraction = 0.7;
  std::size_t split_count = 10;
  std::uint64_t seed = 0;
  std::vector<std::size_t> k_values{500};
  Hyperparams hyperparams;
  // Sensitive attributes are left out of the feature set unless set.
  bool include_sensitive_features = false;
  std::optional<GroupKey> baseline;

  void validate() const;
};

struct PipelineResult {
  Ranking test_ranking;
  Ranking ground_truth;
  MetricReport report;
  ListwiseModel model;
};

// Non-sensitive, non-outcome observed variables in declaration order.
std::vector<std::string> ltr_features(const CausalModelSpec& spec,
                                      bool include_sensitive);

// `spec` with every eligible mediator marked resolving (or none).
CausalModelSpec with_resolving(const CausalModelSpec& spec, bool resolving);

// Variants that transform the data fit the causal model on `train` and train
// the ranker on the counterfactual training data. The cf-LTR variants also
// map `test` through the model (restored from its JSON form) before
// prediction. Ground truth on test is the observed outcome for the original
// variant and the counterfactual outcome otherwise; utility loss is measured
// against the observed ranking.
PipelineResult run_pipeline(const Dataset& train, const Dataset& test,
                            const CausalModelSpec& spec,
                            const PipelineConfig& cfg);

// Seeded shuffle into (train, test) with round(fraction * n) training rows.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double fraction,
                                          std::uint64_t seed);

struct SummaryRow {
  std::string metric;
  std::string group;
  std::size_t k = 0;
  std::size_t count = 0;
  double mean = 0.0;
  // Sample standard deviation; absent for a single observation.
  std::optional<double> stddev;
};

// Mean and spread of AP, sensitivity and selection rate across splits.
std::vector<SummaryRow> summarize(std::span<const MetricReport> reports);

nlohmann::json to_json(std::span<const SummaryRow> rows);

}  // namespace cifrank
