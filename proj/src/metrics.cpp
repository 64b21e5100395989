#include "cifrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "cifrank/error.hpp"

namespace cifrank {

namespace {

void check_k(const Ranking& ranking, std::size_t k) {
  if (k == 0 || k > ranking.size()) {
    throw ConfigError("k=" + std::to_string(k) + " is outside [1, " +
                      std::to_string(ranking.size()) + "]");
  }
}

void check_rows(const Ranking& ranking, const Dataset& data) {
  for (std::size_t row : ranking.order) {
    if (row >= data.size()) {
      throw DataError("ranking refers to row " + std::to_string(row) +
                      " outside the dataset");
    }
  }
}

std::vector<double> shifted_scores(const Dataset& data,
                                   std::string_view score_column) {
  const auto column = data.column(score_column);
  std::vector<double> scores(column.begin(), column.end());
  const double lo = *std::min_element(scores.begin(), scores.end());
  if (lo < 0.0) {
    for (double& s : scores) s += std::fabs(lo);
  }
  return scores;
}

std::vector<bool> membership(const Ranking& ranking, std::size_t k,
                             std::size_t n) {
  std::vector<bool> in(n, false);
  for (std::size_t i = 0; i < k; ++i) in[ranking.order[i]] = true;
  return in;
}

std::string number_or_na(const std::optional<double>& value) {
  return value ? format_double(*value) : "NA";
}

nlohmann::json json_or_null(const std::optional<double>& value) {
  return value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

}  // namespace

std::map<GroupKey, double> selection_rates(
    const Ranking& ranking, const Dataset& data, std::size_t k,
    std::span<const std::string> sensitive) {
  check_k(ranking, k);
  check_rows(ranking, data);
  const GroupIndex groups = GroupIndex::build(data, sensitive);
  std::vector<std::size_t> selected(groups.keys.size(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    ++selected[groups.group_of[ranking.order[i]]];
  }
  const double n = static_cast<double>(data.size());
  std::map<GroupKey, double> rates;
  for (std::size_t g = 0; g < groups.keys.size(); ++g) {
    const double share = static_cast<double>(selected[g]) / static_cast<double>(k);
    const double proportion = static_cast<double>(groups.sizes[g]) / n;
    rates[groups.keys[g]] = share / proportion;
  }
  return rates;
}

std::map<GroupKey, double> eo_sensitivity(
    const Ranking& ground_truth, const Ranking& predicted, const Dataset& data,
    std::size_t k, std::span<const std::string> sensitive) {
  check_k(ground_truth, k);
  check_k(predicted, k);
  check_rows(ground_truth, data);
  check_rows(predicted, data);
  const GroupIndex groups = GroupIndex::build(data, sensitive);
  const auto in_predicted = membership(predicted, k, data.size());
  std::vector<std::size_t> positives(groups.keys.size(), 0);
  std::vector<std::size_t> hits(groups.keys.size(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t row = ground_truth.order[i];
    const std::size_t g = groups.group_of[row];
    ++positives[g];
    if (in_predicted[row]) ++hits[g];
  }
  std::map<GroupKey, double> out;
  for (std::size_t g = 0; g < groups.keys.size(); ++g) {
    if (positives[g] == 0) continue;
    out[groups.keys[g]] =
        static_cast<double>(hits[g]) / static_cast<double>(positives[g]);
  }
  return out;
}

double rkl(const Ranking& ranking, const Dataset& data,
           std::span<const std::string> sensitive, std::size_t step) {
  if (step < 2) throw ConfigError("rKL step must be at least 2");
  const std::size_t n = data.size();
  if (ranking.size() != n) {
    throw DataError("rKL needs a full ranking of the dataset");
  }
  if (n < step) {
    throw DataError("rKL needs at least " + std::to_string(step) + " records");
  }
  check_rows(ranking, data);
  const GroupIndex groups = GroupIndex::build(data, sensitive);
  const std::size_t m = groups.keys.size();
  std::vector<double> q(m);
  for (std::size_t g = 0; g < m; ++g) {
    q[g] = static_cast<double>(groups.sizes[g]) / static_cast<double>(n);
  }
  std::vector<std::size_t> counts(m, 0);
  double total = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    ++counts[groups.group_of[ranking.order[i - 1]]];
    if (i % step != 0 && i != n) continue;
    double kl = 0.0;
    for (std::size_t g = 0; g < m; ++g) {
      if (counts[g] == 0) continue;
      const double p = static_cast<double>(counts[g]) / static_cast<double>(i);
      kl += p * std::log2(p / q[g]);
    }
    total += kl / std::log2(static_cast<double>(i));
  }
  return total;
}

std::map<GroupKey, std::optional<double>> igf_ratio(
    const Ranking& ranking, const Dataset& data, std::string_view score_column,
    std::size_t k, std::span<const std::string> sensitive) {
  check_k(ranking, k);
  check_rows(ranking, data);
  const GroupIndex groups = GroupIndex::build(data, sensitive);
  const auto scores = shifted_scores(data, score_column);
  const auto selected = membership(ranking, k, data.size());
  const std::size_t m = groups.keys.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> lowest_in(m, kInf);
  std::vector<double> highest_out(m, -kInf);
  for (std::size_t row = 0; row < data.size(); ++row) {
    const std::size_t g = groups.group_of[row];
    if (selected[row]) {
      lowest_in[g] = std::min(lowest_in[g], scores[row]);
    } else {
      highest_out[g] = std::max(highest_out[g], scores[row]);
    }
  }
  std::map<GroupKey, std::optional<double>> out;
  for (std::size_t g = 0; g < m; ++g) {
    std::optional<double> ratio;
    if (lowest_in[g] != kInf && highest_out[g] != -kInf &&
        highest_out[g] != 0.0) {
      ratio = std::clamp(lowest_in[g] / highest_out[g], 0.0, 1.0);
    }
    out[groups.keys[g]] = ratio;
  }
  return out;
}

double y_utility_loss(const Ranking& original, const Ranking& proposed,
                      const Dataset& data, std::string_view score_column,
                      std::size_t k) {
  check_k(original, k);
  check_k(proposed, k);
  check_rows(original, data);
  check_rows(proposed, data);
  const auto scores = shifted_scores(data, score_column);
  double reference = 0.0;
  double achieved = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    reference += scores[original.order[i]];
    achieved += scores[proposed.order[i]];
  }
  if (reference == 0.0) {
    throw NumericalError("utility loss is undefined: original top-" +
                         std::to_string(k) + " scores sum to zero");
  }
  return std::clamp(1.0 - achieved / reference, 0.0, 1.0);
}

double average_precision(const Ranking& ground_truth, const Ranking& predicted,
                         std::size_t k) {
  check_k(ground_truth, k);
  check_k(predicted, k);
  std::size_t n = 0;
  for (std::size_t row : ground_truth.order) n = std::max(n, row + 1);
  for (std::size_t row : predicted.order) n = std::max(n, row + 1);
  const auto relevant = membership(ground_truth, k, n);
  std::vector<bool> seen_true(n, false);
  std::vector<bool> seen_pred(n, false);
  std::size_t overlap = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t t = ground_truth.order[i];
    const std::size_t p = predicted.order[i];
    seen_true[t] = true;
    if (seen_pred[t]) ++overlap;
    seen_pred[p] = true;
    if (seen_true[p]) ++overlap;
    if (relevant[p]) {
      sum += static_cast<double>(overlap) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(k);
}

MetricReport evaluate(const Ranking& proposed, const EvaluationInputs& inputs,
                      std::string label) {
  if (inputs.data == nullptr) throw ConfigError("evaluation needs a dataset");
  const Dataset& data = *inputs.data;
  MetricReport report;
  report.label = std::move(label);
  report.k_values = inputs.k_values;
  report.groups = GroupIndex::build(data, inputs.sensitive).keys;
  for (std::size_t k : inputs.k_values) {
    const auto rates = selection_rates(proposed, data, k, inputs.sensitive);
    const auto igf =
        igf_ratio(proposed, data, inputs.score_column, k, inputs.sensitive);
    std::map<GroupKey, double> sensitivity;
    if (inputs.ground_truth != nullptr) {
      sensitivity = eo_sensitivity(*inputs.ground_truth, proposed, data, k,
                                   inputs.sensitive);
    }
    for (const auto& key : report.groups) {
      GroupMetrics& cell = report.per_group[{key, k}];
      cell.selection_rate = rates.at(key);
      cell.igf_ratio = igf.at(key);
      if (auto it = sensitivity.find(key); it != sensitivity.end()) {
        cell.sensitivity = it->second;
      }
    }
    GlobalMetrics& global = report.global[k];
    if (inputs.original != nullptr) {
      global.y_utility_loss = y_utility_loss(*inputs.original, proposed, data,
                                             inputs.score_column, k);
    }
    if (inputs.ground_truth != nullptr) {
      global.average_precision =
          average_precision(*inputs.ground_truth, proposed, k);
    }
  }
  if (proposed.size() == data.size()) {
    report.rkl = rkl(proposed, data, inputs.sensitive, inputs.rkl_step);
  }
  return report;
}

void merge_k(MetricReport& into, const MetricReport& part, std::size_t k) {
  if (std::find(into.k_values.begin(), into.k_values.end(), k) ==
      into.k_values.end()) {
    into.k_values.push_back(k);
  }
  if (into.groups.empty()) into.groups = part.groups;
  for (const auto& key : part.groups) {
    into.per_group[{key, k}] = part.per_group.at({key, k});
  }
  into.global[k] = part.global.at(k);
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json doc;
  doc["label"] = report.label;
  doc["k_values"] = report.k_values;
  doc["rkl"] = json_or_null(report.rkl);
  doc["groups"] = nlohmann::json::array();
  for (const auto& key : report.groups) doc["groups"].push_back(key.label());
  doc["per_group"] = nlohmann::json::array();
  for (std::size_t k : report.k_values) {
    for (const auto& key : report.groups) {
      const GroupMetrics& cell = report.per_group.at({key, k});
      doc["per_group"].push_back({{"group", key.label()},
                                  {"k", k},
                                  {"selection_rate", cell.selection_rate},
                                  {"sensitivity", json_or_null(cell.sensitivity)},
                                  {"igf_ratio", json_or_null(cell.igf_ratio)}});
    }
  }
  doc["global"] = nlohmann::json::array();
  for (std::size_t k : report.k_values) {
    const GlobalMetrics& g = report.global.at(k);
    doc["global"].push_back(
        {{"k", k},
         {"y_utility_loss", json_or_null(g.y_utility_loss)},
         {"average_precision", json_or_null(g.average_precision)}});
  }
  return doc;
}

void write_report_csv(std::ostream& out,
                      std::span<const MetricReport> reports) {
  out << "label,group,k,selection_rate,sensitivity,igf_ratio,y_utility_loss,"
         "average_precision,rkl\n";
  for (const MetricReport& report : reports) {
    for (std::size_t k : report.k_values) {
      const GlobalMetrics& g = report.global.at(k);
      for (const auto& key : report.groups) {
        const GroupMetrics& cell = report.per_group.at({key, k});
        out << report.label << ",\"" << key.label() << "\"," << k << ','
            << format_double(cell.selection_rate) << ','
            << number_or_na(cell.sensitivity) << ','
            << number_or_na(cell.igf_ratio) << ','
            << number_or_na(g.y_utility_loss) << ','
            << number_or_na(g.average_precision) << ','
            << number_or_na(report.rkl) << '\n';
      }
    }
  }
}

}  // namespace cifrank
