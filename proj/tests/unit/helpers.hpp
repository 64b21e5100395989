#pragma once

#include <string>
#include <vector>

#include "cifrank/dataset.hpp"
#include "cifrank/estimation.hpp"
#include "cifrank/scm.hpp"
#include "cifrank/synthgen.hpp"

namespace testing {

inline cifrank::Dataset m1_data(std::vector<double> g, std::vector<double> r,
                                std::vector<double> x, std::vector<double> y) {
  return cifrank::Dataset(
      cifrank::Schema::from_model(cifrank::moving_company_model(false)),
      {std::move(g), std::move(r), std::move(x), std::move(y)});
}

struct M1Weights {
  double x0 = 0.0, g_x = 1.0, r_x = 0.0;
  double y0 = 0.0, g_y = 0.12, r_y = 0.08, x_y = 0.8;
};

inline cifrank::FittedEquation known_linear(const cifrank::CausalModelSpec& spec,
                                            const std::string& target,
                                            std::vector<double> coefficients) {
  cifrank::FittedEquation eq;
  eq.form = spec.equation_for(target);
  eq.sensitive = spec.sensitive;
  eq.columns = cifrank::design_matrix_columns(eq.form, spec.sensitive);
  eq.coefficients = std::move(coefficients);
  return eq;
}

// M1 with known structural equations and no stored residuals. Coefficient
// order follows the default forms: X ~ 1 + G + R, Y ~ 1 + G + R + X.
inline cifrank::FittedModel known_m1(const M1Weights& w, bool resolving) {
  cifrank::FittedModel model;
  model.spec = cifrank::moving_company_model(resolving);
  model.equations["X"] = known_linear(model.spec, "X", {w.x0, w.g_x, w.r_x});
  model.equations["Y"] =
      known_linear(model.spec, "Y", {w.y0, w.g_y, w.r_y, w.x_y});
  return model;
}

}  // namespace testing
