#pragma once

#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "cifrank/dataset.hpp"
#include "cifrank/estimation.hpp"
#include "cifrank/group.hpp"

namespace cifrank {

// Where the exogenous error of each structural equation comes from.
//   kStored: the residuals saved at fit time, looked up by record row
//            (training data).
//   kRecomputed: observed minus f-hat on the observed parents (test data,
//            or any model restored from JSON).
enum class ResidualSource { kStored, kRecomputed };

struct CounterfactualConfig {
  GroupKey baseline;
  std::reference_wrapper<const FittedModel> model;
  ResidualSource residuals = ResidualSource::kStored;
};

// The fully unprivileged group: every sensitive attribute 0.
GroupKey default_baseline(const CausalModelSpec& spec);

// Sets the sensitive attributes to the baseline and propagates through the
// DAG in topological order. Resolving mediators and moderators keep their
// observed values; every other descendant is recomputed as f-hat of its
// (transformed) parents plus its own residual. Records already in the
// baseline group come back unchanged.
Record transform_record(const Record& record, const CounterfactualConfig& cfg);

// Record order and ids are preserved. Per-record failures are collected and
// reported together.
Dataset transform_dataset(const Dataset& data, const CounterfactualConfig& cfg);

// Sidecar describing a transformed dataset.
nlohmann::json provenance(const CounterfactualConfig& cfg,
                          const std::string& input_hash);

}  // namespace cifrank
