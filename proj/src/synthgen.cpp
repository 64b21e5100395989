#include "cifrank/synthgen.hpp"

#include <cmath>

#include "cifrank/error.hpp"
#include "cifrank/random.hpp"

namespace cifrank {

using nlohmann::json;

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1]");
  }
}

void check_finite(double w, const char* name) {
  if (!std::isfinite(w)) throw ConfigError(std::string(name) + " is not finite");
}

}  // namespace

void SynthConfig::validate() const {
  if (n == 0) throw ConfigError("n must be at least 1");
  check_finite(weights.g_x, "w_gx");
  check_finite(weights.r_x, "w_rx");
  check_finite(weights.g_y, "w_gy");
  check_finite(weights.r_y, "w_ry");
  check_finite(weights.x_y, "w_xy");
  if (!(sigma_x >= 0.0) || !std::isfinite(sigma_x)) {
    throw ConfigError("sigma_x must be finite and non-negative");
  }
  if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y)) {
    throw ConfigError("sigma_y must be finite and non-negative");
  }
  if (const auto* ind = std::get_if<IndependentGroups>(&groups)) {
    check_probability(ind->p_female, "p_female");
    check_probability(ind->p_black, "p_black");
  } else {
    const auto& ex = std::get<ExplicitGroups>(groups);
    check_probability(ex.white_male, "white_male");
    check_probability(ex.black_male, "black_male");
    check_probability(ex.white_female, "white_female");
    check_probability(ex.black_female, "black_female");
    const double total =
        ex.white_male + ex.black_male + ex.white_female + ex.black_female;
    if (std::fabs(total - 1.0) > 1e-9) {
      throw ConfigError("group proportions must sum to 1");
    }
  }
}

std::vector<std::string> preset_names() { return {"moving", "moving_bm", "moving_r"}; }

SynthConfig preset(std::string_view name) {
  SynthConfig cfg;
  if (name == "moving") return cfg;
  if (name == "moving_r") {
    cfg.weights.r_x = 0.1;
    return cfg;
  }
  if (name == "moving_bm") {
    cfg.groups = ExplicitGroups{0.40, 0.50, 0.05, 0.05};
    return cfg;
  }
  std::string known;
  for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
  throw ConfigError("unknown preset '" + std::string(name) +
                    "' (available: " + known + ")");
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<double> g(cfg.n), r(cfg.n), x(cfg.n), y(cfg.n);
  const EdgeWeights& w = cfg.weights;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    if (const auto* ind = std::get_if<IndependentGroups>(&cfg.groups)) {
      g[i] = rng.uniform() < ind->p_female ? 0.0 : 1.0;
      r[i] = rng.uniform() < ind->p_black ? 0.0 : 1.0;
    } else {
      const auto& ex = std::get<ExplicitGroups>(cfg.groups);
      const double u = rng.uniform();
      double edge = ex.white_male;
      if (u < edge) {
        g[i] = 1.0, r[i] = 1.0;
      } else if (u < (edge += ex.black_male)) {
        g[i] = 1.0, r[i] = 0.0;
      } else if (u < (edge += ex.white_female)) {
        g[i] = 0.0, r[i] = 1.0;
      } else {
        g[i] = 0.0, r[i] = 0.0;
      }
    }
    const double eps_x = rng.normal();
    const double eps_y = rng.normal();
    x[i] = w.g_x * g[i] + w.r_x * r[i] + cfg.sigma_x * eps_x;
    y[i] = w.x_y * x[i] + w.g_y * g[i] + w.r_y * r[i] + cfg.sigma_y * eps_y;
  }
  Schema schema = Schema::from_model(moving_company_model(false));
  return Dataset(std::move(schema), {std::move(g), std::move(r), std::move(x), std::move(y)});
}

CausalModelSpec moving_company_model(bool resolving_x) {
  CausalModelSpec spec;
  spec.vertices = {{"G", Role::kSensitive, ValueKind::kBinary, false},
                   {"R", Role::kSensitive, ValueKind::kBinary, false},
                   {"X", Role::kMediator, ValueKind::kContinuous, false},
                   {"Y", Role::kOutcome, ValueKind::kContinuous, false}};
  spec.edges = {{"G", "X"}, {"R", "X"}, {"G", "Y"}, {"R", "Y"}, {"X", "Y"}};
  spec.sensitive = {"G", "R"};
  spec.resolving["X"] = resolving_x;
  return spec;
}

json to_json(const SynthConfig& cfg) {
  json doc;
  doc["n"] = cfg.n;
  doc["weights"] = {{"w_gx", cfg.weights.g_x},
                    {"w_rx", cfg.weights.r_x},
                    {"w_gy", cfg.weights.g_y},
                    {"w_ry", cfg.weights.r_y},
                    {"w_xy", cfg.weights.x_y}};
  if (const auto* ind = std::get_if<IndependentGroups>(&cfg.groups)) {
    doc["groups"] = {{"scheme", "independent"},
                     {"p_female", ind->p_female},
                     {"p_black", ind->p_black}};
  } else {
    const auto& ex = std::get<ExplicitGroups>(cfg.groups);
    doc["groups"] = {{"scheme", "explicit"},
                     {"white_male", ex.white_male},
                     {"black_male", ex.black_male},
                     {"white_female", ex.white_female},
                     {"black_female", ex.black_female}};
  }
  doc["sigma_x"] = cfg.sigma_x;
  doc["sigma_y"] = cfg.sigma_y;
  doc["seed"] = cfg.seed;
  return doc;
}

SynthConfig synth_config_from_json(const json& doc) {
  SynthConfig cfg;
  try {
    if (doc.contains("preset")) cfg = preset(doc.at("preset").get<std::string>());
    if (doc.contains("n")) {
      const auto n = doc.at("n").get<long long>();
      if (n <= 0) throw ConfigError("n must be at least 1");
      cfg.n = static_cast<std::size_t>(n);
    }
    if (doc.contains("weights")) {
      const json& w = doc.at("weights");
      cfg.weights.g_x = w.value("w_gx", cfg.weights.g_x);
      cfg.weights.r_x = w.value("w_rx", cfg.weights.r_x);
      cfg.weights.g_y = w.value("w_gy", cfg.weights.g_y);
      cfg.weights.r_y = w.value("w_ry", cfg.weights.r_y);
      cfg.weights.x_y = w.value("w_xy", cfg.weights.x_y);
    }
    if (doc.contains("groups")) {
      const json& g = doc.at("groups");
      const std::string scheme = g.value("scheme", std::string("independent"));
      if (scheme == "independent") {
        cfg.groups = IndependentGroups{g.value("p_female", 0.37),
                                       g.value("p_black", 0.37)};
      } else if (scheme == "explicit") {
        cfg.groups = ExplicitGroups{g.at("white_male").get<double>(),
                                    g.at("black_male").get<double>(),
                                    g.at("white_female").get<double>(),
                                    g.at("black_female").get<double>()};
      } else {
        throw ConfigError("unknown group scheme '" + scheme + "'");
      }
    }
    cfg.sigma_x = doc.value("sigma_x", cfg.sigma_x);
    cfg.sigma_y = doc.value("sigma_y", cfg.sigma_y);
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace cifrank
