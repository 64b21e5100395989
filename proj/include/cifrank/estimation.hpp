#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cifrank/dataset.hpp"
#include "cifrank/scm.hpp"
#include "cifrank/spline.hpp"

namespace cifrank {

struct FitDiagnostics {
  double r_squared = 0.0;
  double residual_variance = 0.0;
};

using ValueLookup = std::function<double(const std::string&)>;

// A fitted structural equation. Residuals are indexed by dataset row and are
// empty for equations restored from JSON.
struct FittedEquation {
  EquationForm form;
  std::vector<std::string> sensitive;
  std::vector<ColumnDescriptor> columns;
  std::vector<double> coefficients;
  // Spline forms: one basis per group index; groups absent from the
  // training data have no basis.
  std::vector<std::optional<NaturalCubicBasis>> group_bases;
  std::vector<double> residuals;
  FitDiagnostics diagnostics;

  double coefficient(std::string_view column_name) const;
  bool has_group(std::size_t group) const;
  // f-hat evaluated on the parent values supplied by `lookup`.
  double predict(const ValueLookup& lookup) const;
  double predict(const Record& record) const;
};

struct FittedModel {
  CausalModelSpec spec;
  std::map<std::string, FittedEquation> equations;

  bool has_residuals() const;
};

// Ordinary least squares through an unpivoted Householder QR. A column whose
// R diagonal falls below 1e-10 times the largest column norm is reported as
// singular by name.
FittedEquation fit_linear(const Dataset& data, const EquationForm& form,
                          std::span<const std::string> sensitive);

// One natural cubic spline in the moderator per intersectional group, with
// knots at group quantiles, fit jointly by least squares.
FittedEquation fit_per_group_spline(const Dataset& data,
                                    const EquationForm& form,
                                    std::span<const std::string> sensitive);

// Fits every endogenous variable in topological order.
FittedModel fit_model(const Dataset& data, const CausalModelSpec& spec);

nlohmann::json to_json(const FittedEquation& eq);
nlohmann::json to_json(const FittedModel& model);
FittedModel fitted_model_from_json(const nlohmann::json& doc);
FittedModel load_fitted_model(const std::string& path);

// Canonical JSON text; equal models give equal strings.
std::string canonical_text(const FittedModel& model);

}  // namespace cifrank
