#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "cifrank/error.hpp"
#include "cifrank/scm.hpp"
#include "cifrank/synthgen.hpp"

using namespace cifrank;

namespace {

CausalModelSpec m2_like() {
  CausalModelSpec spec;
  spec.vertices = {{"X2", Role::kMediator, ValueKind::kContinuous, false},
                   {"G", Role::kSensitive, ValueKind::kBinary, false},
                   {"X1", Role::kMediator, ValueKind::kContinuous, false},
                   {"R", Role::kSensitive, ValueKind::kBinary, false},
                   {"X3", Role::kMediator, ValueKind::kContinuous, false},
                   {"Y", Role::kOutcome, ValueKind::kContinuous, false}};
  spec.sensitive = {"G", "R"};
  spec.edges = {{"G", "X1"}, {"R", "X2"}, {"G", "X3"}, {"R", "X3"},
                {"X1", "Y"}, {"X2", "Y"}, {"X3", "Y"}, {"G", "Y"}};
  return spec;
}

bool respects_edges(const CausalModelSpec& spec,
                    const std::vector<std::string>& order) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const auto& e : spec.edges) {
    if (pos.at(e.source) >= pos.at(e.target)) return false;
  }
  return true;
}

// Every valid order, then the one that is smallest when each position is
// compared by declaration index.
std::vector<std::string> brute_force_order(const CausalModelSpec& spec) {
  std::vector<std::size_t> perm(spec.vertices.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::vector<std::size_t> best;
  do {
    std::vector<std::string> names;
    for (auto i : perm) names.push_back(spec.vertices[i].name);
    if (respects_edges(spec, names) && (best.empty() || perm < best)) best = perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<std::string> out;
  for (auto i : best) out.push_back(spec.vertices[i].name);
  return out;
}

}  // namespace

TEST_CASE("M1 with resolving X validates") {
  const auto result = validate(moving_company_model(true));
  CHECK(result.ok());
}

TEST_CASE("cycle is reported") {
  auto spec = moving_company_model(false);
  spec.edges.push_back({"Y", "X"});
  const auto result = validate(spec);
  CHECK(result.has(ViolationCode::kCycle));
  CHECK_THROWS_AS(topological_order(spec), ConfigError);
}

TEST_CASE("edge into a sensitive attribute is reported") {
  auto spec = moving_company_model(false);
  spec.edges.push_back({"X", "G"});
  CHECK(validate(spec).has(ViolationCode::kNonExogenousSensitive));
}

TEST_CASE("latent confounders are rejected") {
  auto spec = moving_company_model(false);
  spec.vertices.push_back({"U", Role::kCovariate, ValueKind::kContinuous, true});
  spec.edges.push_back({"U", "X"});
  spec.edges.push_back({"U", "Y"});
  CHECK(validate(spec).has(ViolationCode::kLatentConfounder));
}

TEST_CASE("mediator to mediator edges are rejected") {
  auto spec = m2_like();
  spec.edges.push_back({"X1", "X3"});
  CHECK(validate(spec).has(ViolationCode::kMediatorConfounding));
}

TEST_CASE("structural checks") {
  SUBCASE("unknown variable") {
    auto spec = moving_company_model(false);
    spec.edges.push_back({"Z", "Y"});
    CHECK(validate(spec).has(ViolationCode::kUnknownVariable));
  }
  SUBCASE("duplicate variable") {
    auto spec = moving_company_model(false);
    spec.vertices.push_back(spec.vertices[2]);
    CHECK(validate(spec).has(ViolationCode::kDuplicateVariable));
  }
  SUBCASE("two outcomes") {
    auto spec = moving_company_model(false);
    spec.vertices[2].role = Role::kOutcome;
    spec.resolving.clear();
    CHECK(validate(spec).has(ViolationCode::kOutcomeCount));
  }
  SUBCASE("continuous sensitive attribute") {
    auto spec = moving_company_model(false);
    spec.vertices[0].kind = ValueKind::kContinuous;
    CHECK(validate(spec).has(ViolationCode::kBadSensitive));
  }
  SUBCASE("resolving flag on a non-descendant") {
    auto spec = moving_company_model(false);
    spec.resolving["G"] = true;
    CHECK(validate(spec).has(ViolationCode::kBadResolving));
  }
  SUBCASE("moderator caused by a sensitive attribute") {
    auto spec = moving_company_model(false);
    spec.vertices[2].role = Role::kModerator;
    spec.resolving.clear();
    CHECK(validate(spec).has(ViolationCode::kBadModerator));
  }
}

TEST_CASE("equation terms must be parents") {
  auto spec = moving_company_model(false);
  EquationForm form;
  form.target = "X";
  form.main_effects = {"G", "R", "Y"};
  spec.equations["X"] = form;
  CHECK(validate(spec).has(ViolationCode::kBadTerm));
}

TEST_CASE("interactions need distinct sensitive main effects") {
  auto spec = moving_company_model(false);
  EquationForm form;
  form.target = "Y";
  form.main_effects = {"X", "G", "R"};
  form.interactions = {{"G", "G"}};
  spec.equations["Y"] = form;
  CHECK(validate(spec).has(ViolationCode::kBadTerm));

  form.interactions = {{"G", "R"}};
  form.main_effects = {"X", "G"};
  spec.equations["Y"] = form;
  CHECK(validate(spec).has(ViolationCode::kBadTerm));

  form.main_effects = {"X", "G", "R"};
  spec.equations["Y"] = form;
  CHECK(validate(spec).ok());
}

TEST_CASE("spline forms need a continuous moderator") {
  CausalModelSpec spec;
  spec.vertices = {{"G", Role::kSensitive, ValueKind::kBinary, false},
                   {"R", Role::kSensitive, ValueKind::kBinary, false},
                   {"AGE", Role::kModerator, ValueKind::kContinuous, false},
                   {"Y", Role::kOutcome, ValueKind::kContinuous, false}};
  spec.sensitive = {"G", "R"};
  spec.edges = {{"G", "Y"}, {"R", "Y"}, {"AGE", "Y"}};
  EquationForm form;
  form.target = "Y";
  form.main_effects = {"AGE"};
  form.basis = Basis::per_group_spline(4);
  spec.equations["Y"] = form;
  CHECK(validate(spec).ok());

  form.main_effects = {"AGE", "G"};
  spec.equations["Y"] = form;
  CHECK(validate(spec).has(ViolationCode::kBadTerm));

  form.main_effects = {"AGE"};
  form.basis = Basis::per_group_spline(1);
  spec.equations["Y"] = form;
  CHECK(validate(spec).has(ViolationCode::kBadTerm));
}

TEST_CASE("topological order") {
  SUBCASE("M1") {
    CHECK(topological_order(moving_company_model(false)) ==
          std::vector<std::string>{"G", "R", "X", "Y"});
  }
  SUBCASE("chain") {
    CausalModelSpec spec;
    spec.vertices = {{"C", Role::kOutcome, ValueKind::kContinuous, false},
                     {"A", Role::kCovariate, ValueKind::kContinuous, false},
                     {"B", Role::kCovariate, ValueKind::kContinuous, false}};
    spec.edges = {{"A", "B"}, {"B", "C"}};
    CHECK(topological_order(spec) == std::vector<std::string>{"A", "B", "C"});
  }
  SUBCASE("M2-like graph matches the exhaustive oracle") {
    const auto spec = m2_like();
    REQUIRE(validate(spec).ok());
    const auto order = topological_order(spec);
    CHECK(order == brute_force_order(spec));
    CHECK(respects_edges(spec, order));
  }
}

TEST_CASE("random valid DAGs: order respects every edge and the oracle") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    CausalModelSpec spec;
    const int n = 2 + static_cast<int>(gen() % 5);
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("V" + std::to_string(i));
    std::vector<std::size_t> declared(n);
    for (int i = 0; i < n; ++i) declared[i] = i;
    std::shuffle(declared.begin(), declared.end(), gen);
    for (auto i : declared) {
      spec.vertices.push_back({names[i], i == static_cast<std::size_t>(n - 1)
                                             ? Role::kOutcome
                                             : Role::kCovariate,
                               ValueKind::kContinuous, false});
    }
    // Edges only go from lower to higher index, so the graph is acyclic.
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (gen() % 2) spec.edges.push_back({names[a], names[b]});
      }
    }
    REQUIRE(validate(spec).ok());
    const auto order = topological_order(spec);
    CHECK(respects_edges(spec, order));
    CHECK(order == brute_force_order(spec));
  }
}

TEST_CASE("design matrix columns") {
  const auto spec = moving_company_model(false);
  SUBCASE("Y with G*R interaction") {
    EquationForm form;
    form.target = "Y";
    form.main_effects = {"X", "G", "R"};
    form.interactions = {{"G", "R"}};
    std::vector<std::string> names;
    for (const auto& c : design_matrix_columns(form, spec.sensitive)) {
      names.push_back(c.name());
    }
    CHECK(names == std::vector<std::string>{"(intercept)", "X", "G", "R", "G*R"});
  }
  SUBCASE("X without interactions") {
    std::vector<std::string> names;
    for (const auto& c : design_matrix_columns(spec.equation_for("X"), spec.sensitive)) {
      names.push_back(c.name());
    }
    CHECK(names == std::vector<std::string>{"(intercept)", "G", "R"});
  }
  SUBCASE("per-group spline with 4 knots over 4 groups") {
    EquationForm form;
    form.target = "Y";
    form.main_effects = {"AGE"};
    form.basis = Basis::per_group_spline(4);
    const auto cols = design_matrix_columns(form, spec.sensitive);
    CHECK(cols.size() == 16);
    std::set<std::pair<std::size_t, std::size_t>> cells;
    for (const auto& c : cols) cells.insert({c.group, c.basis_index});
    CHECK(cells.size() == 16);
  }
  SUBCASE("pure function") {
    const auto form = spec.equation_for("Y");
    CHECK(design_matrix_columns(form, spec.sensitive) ==
          design_matrix_columns(form, spec.sensitive));
  }
}

TEST_CASE("graph JSON round-trips byte-stably") {
  auto spec = moving_company_model(true);
  EquationForm form;
  form.target = "Y";
  form.main_effects = {"X", "G", "R"};
  form.interactions = {{"G", "R"}};
  spec.equations["Y"] = form;
  const std::string text = to_json(spec).dump();
  const auto back = spec_from_json(nlohmann::json::parse(text));
  CHECK(to_json(back).dump() == text);
  CHECK(back.is_resolving("X"));
  CHECK(back.equation_for("Y").interactions.size() == 1);
}

TEST_CASE("malformed graph JSON is a config error") {
  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"vertices": 3})")),
                  ConfigError);
  CHECK_THROWS_AS(
      spec_from_json(nlohmann::json::parse(
          R"({"vertices":[{"name":"A","role":"boss","kind":"binary"}],"edges":[]})")),
      ConfigError);
}
