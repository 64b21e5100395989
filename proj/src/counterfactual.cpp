#include "cifrank/counterfactual.hpp"

#include <sstream>

#include "cifrank/error.hpp"
#include "cifrank/hash.hpp"

namespace cifrank {

GroupKey default_baseline(const CausalModelSpec& spec) {
  GroupKey key;
  for (const auto& s : spec.sensitive) key.assignments.emplace_back(s, 0);
  return key;
}

namespace {

void check_baseline(const GroupKey& baseline, const CausalModelSpec& spec) {
  if (baseline.assignments.size() != spec.sensitive.size()) {
    throw ConfigError("baseline " + baseline.label() +
                      " must assign every sensitive attribute");
  }
  for (std::size_t j = 0; j < spec.sensitive.size(); ++j) {
    if (baseline.assignments[j].first != spec.sensitive[j]) {
      throw ConfigError("baseline " + baseline.label() +
                        " must follow the model's sensitive order");
    }
  }
}

bool in_baseline(const Record& record, const GroupKey& baseline) {
  for (const auto& [name, value] : baseline.assignments) {
    if (record.at(name) != static_cast<double>(value)) return false;
  }
  return true;
}

double residual_for(const FittedEquation& eq, const Record& observed,
                    ResidualSource source) {
  if (source == ResidualSource::kRecomputed) {
    return observed.at(eq.form.target) - eq.predict(observed);
  }
  if (observed.row >= eq.residuals.size()) {
    throw DataError("missing residual for record " + observed.id +
                    " in equation '" + eq.form.target + "'");
  }
  return eq.residuals[observed.row];
}

// Equations to re-evaluate, in topological order.
std::vector<const FittedEquation*> propagation_plan(
    const CounterfactualConfig& cfg) {
  const FittedModel& model = cfg.model.get();
  const CausalModelSpec& spec = model.spec;
  check_baseline(cfg.baseline, spec);
  const auto descendants = spec.sensitive_descendants();
  std::vector<const FittedEquation*> plan;
  for (const auto& name : topological_order(spec)) {
    if (spec.is_sensitive(name) || !descendants.count(name)) continue;
    const VariableSpec* var = spec.find(name);
    if (var->role == Role::kModerator || spec.is_resolving(name)) continue;
    auto it = model.equations.find(name);
    if (it == model.equations.end()) {
      throw ConfigError("fitted model has no equation for '" + name + "'");
    }
    plan.push_back(&it->second);
  }
  return plan;
}

Record apply_plan(const Record& record, const CounterfactualConfig& cfg,
                  const std::vector<const FittedEquation*>& plan) {
  if (in_baseline(record, cfg.baseline)) return record;
  Record out = record;
  for (const auto& [name, value] : cfg.baseline.assignments) {
    out.values[name] = static_cast<double>(value);
  }
  for (const FittedEquation* eq : plan) {
    const double residual = residual_for(*eq, record, cfg.residuals);
    out.values[eq->form.target] = eq->predict(out) + residual;
  }
  return out;
}

}  // namespace

Record transform_record(const Record& record, const CounterfactualConfig& cfg) {
  return apply_plan(record, cfg, propagation_plan(cfg));
}

Dataset transform_dataset(const Dataset& data, const CounterfactualConfig& cfg) {
  const auto plan = propagation_plan(cfg);
  std::vector<Record> records;
  records.reserve(data.size());
  std::ostringstream failures;
  std::size_t failed = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    try {
      records.push_back(apply_plan(data.record(r), cfg, plan));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      if (failed < 10) failures << "\n  record " << data.id(r) << ": " << e.what();
      ++failed;
    }
  }
  if (failed > 0) {
    throw DataError("counterfactual transform failed for " +
                    std::to_string(failed) + " record(s):" + failures.str());
  }
  return data.with_records(records);
}

nlohmann::json provenance(const CounterfactualConfig& cfg,
                          const std::string& input_hash) {
  const FittedModel& model = cfg.model.get();
  nlohmann::json doc;
  doc["baseline"] = to_json(cfg.baseline);
  doc["resolving"] = nlohmann::json::object();
  for (const auto& v : model.spec.vertices) {
    if (v.role == Role::kMediator) {
      doc["resolving"][v.name] = model.spec.is_resolving(v.name);
    }
  }
  doc["residuals"] =
      cfg.residuals == ResidualSource::kStored ? "stored" : "recomputed";
  doc["model_hash"] = hex_digest(canonical_text(model));
  doc["input_hash"] = input_hash;
  return doc;
}

}  // namespace cifrank
