#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cifrank/dataset.hpp"
#include "cifrank/group.hpp"
#include "cifrank/ranking.hpp"

namespace cifrank {

// Rankings passed to the top-k measures may be prefixes (quota rankings) as
// long as they hold at least k rows. Only groups present in `data` appear in
// the returned maps.

// (|g in top-k| / k) / proportion(g)
std::map<GroupKey, double> selection_rates(
    const Ranking& ranking, const Dataset& data, std::size_t k,
    std::span<const std::string> sensitive);

// |g in both top-k sets| / |g in true top-k|. Groups with no member in the
// true top-k are left out.
std::map<GroupKey, double> eo_sensitivity(
    const Ranking& ground_truth, const Ranking& predicted, const Dataset& data,
    std::size_t k, std::span<const std::string> sensitive);

// Sum over checkpoints i = step, 2 step, ... (and n if not a multiple) of
// KL(P_i || Q) / log2(i), in bits, with 0 log 0 = 0. Needs a full ranking.
double rkl(const Ranking& ranking, const Dataset& data,
           std::span<const std::string> sensitive, std::size_t step = 10);

// Lowest selected score over highest unselected score within each group,
// clamped to [0, 1]. Scores are shifted by |min| when negative. Groups fully
// inside or outside the top-k, or with a zero denominator, are nullopt.
std::map<GroupKey, std::optional<double>> igf_ratio(
    const Ranking& ranking, const Dataset& data, std::string_view score_column,
    std::size_t k, std::span<const std::string> sensitive);

// 1 - sum of proposed top-k scores / sum of original top-k scores, clipped to
// [0, 1], after the same shift rule.
double y_utility_loss(const Ranking& original, const Ranking& proposed,
                      const Dataset& data, std::string_view score_column,
                      std::size_t k);

double average_precision(const Ranking& ground_truth, const Ranking& predicted,
                         std::size_t k);

struct GroupMetrics {
  double selection_rate = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> igf_ratio;
};

struct GlobalMetrics {
  std::optional<double> y_utility_loss;
  std::optional<double> average_precision;
};

struct MetricReport {
  std::string label;
  std::vector<std::size_t> k_values;
  std::vector<GroupKey> groups;
  std::map<std::pair<GroupKey, std::size_t>, GroupMetrics> per_group;
  std::map<std::size_t, GlobalMetrics> global;
  std::optional<double> rkl;
};

struct EvaluationInputs {
  const Dataset* data = nullptr;
  std::string score_column;
  std::vector<std::string> sensitive;
  std::vector<std::size_t> k_values;
  std::size_t rkl_step = 10;
  // Reference for utility loss; skipped when null.
  const Ranking* original = nullptr;
  // Reference for sensitivity and average precision; skipped when null.
  const Ranking* ground_truth = nullptr;
};

// rKL is only reported for full rankings.
MetricReport evaluate(const Ranking& proposed, const EvaluationInputs& inputs,
                      std::string label = {});

// Copies the entries for `k` from `part` into `into`.
void merge_k(MetricReport& into, const MetricReport& part, std::size_t k);

nlohmann::json to_json(const MetricReport& report);

// label,group,k,selection_rate,sensitivity,igf_ratio,y_utility_loss,
// average_precision,rkl ; "NA" for missing values.
void write_report_csv(std::ostream& out,
                      std::span<const MetricReport> reports);

}  // namespace cifrank
