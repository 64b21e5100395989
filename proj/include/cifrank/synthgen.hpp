#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cifrank/dataset.hpp"
#include "cifrank/scm.hpp"

namespace cifrank {

struct EdgeWeights {
  double g_x = 1.0;
  double r_x = 0.0;
  double g_y = 0.12;
  double r_y = 0.08;
  double x_y = 0.8;
};

// G and R drawn independently; G=1 male, R=1 White.
struct IndependentGroups {
  double p_female = 0.37;
  double p_black = 0.37;
};

// Joint proportions of the four intersectional groups.
struct ExplicitGroups {
  double white_male = 0.25;
  double black_male = 0.25;
  double white_female = 0.25;
  double black_female = 0.25;
};

struct SynthConfig {
  std::size_t n = 2000;
  EdgeWeights weights;
  std::variant<IndependentGroups, ExplicitGroups> groups = IndependentGroups{};
  double sigma_x = 1.0;
  double sigma_y = 0.25;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

std::vector<std::string> preset_names();
SynthConfig preset(std::string_view name);

// Columns G, R, X, Y; ids are row indices.
Dataset generate(const SynthConfig& cfg);

// G, R -> X; G, R, X -> Y, with linear equations.
CausalModelSpec moving_company_model(bool resolving_x);

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& doc);

}  // namespace cifrank
