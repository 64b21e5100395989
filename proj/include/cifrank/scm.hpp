#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cifrank {

enum class Role { kSensitive, kMediator, kModerator, kOutcome, kCovariate };
enum class ValueKind { kBinary, kContinuous };

std::string_view to_string(Role role);
std::string_view to_string(ValueKind kind);
Role parse_role(std::string_view text);
ValueKind parse_value_kind(std::string_view text);

struct VariableSpec {
  std::string name;
  Role role = Role::kCovariate;
  ValueKind kind = ValueKind::kContinuous;
  // Latent vertices exist only so that validation can reject them.
  bool latent = false;
};

struct Edge {
  std::string source;
  std::string target;
};

// Unordered pair of distinct sensitive attributes, stored as declared.
using InteractionPair = std::pair<std::string, std::string>;

struct Basis {
  enum class Kind { kLinear, kPerGroupSpline };
  Kind kind = Kind::kLinear;
  int knot_count = 4;

  static Basis linear() { return {}; }
  static Basis per_group_spline(int knots) {
    return {Kind::kPerGroupSpline, knots};
  }
  bool is_spline() const { return kind == Kind::kPerGroupSpline; }
};

// Structural equation template: linear main effects plus products of
// sensitive-attribute pairs, or one natural spline per intersectional group.
struct EquationForm {
  std::string target;
  std::vector<std::string> main_effects;
  std::vector<InteractionPair> interactions;
  Basis basis;
  bool intercept = true;
};

struct CausalModelSpec {
  std::vector<VariableSpec> vertices;
  std::vector<Edge> edges;
  std::vector<std::string> sensitive;
  std::map<std::string, bool> resolving;
  std::map<std::string, EquationForm> equations;

  const VariableSpec* find(std::string_view name) const;
  // Parents in vertex declaration order.
  std::vector<std::string> parents(std::string_view name) const;
  bool is_exogenous(std::string_view name) const;
  bool is_sensitive(std::string_view name) const;
  bool is_resolving(std::string_view name) const;
  std::optional<std::string> outcome() const;
  // Declared equation for `name`, or the default linear form over all
  // parents with an intercept and no interactions.
  EquationForm equation_for(std::string_view name) const;
  // Variables reachable from any sensitive attribute, excluding themselves.
  std::set<std::string> sensitive_descendants() const;
  std::set<std::string> ancestors(std::string_view name) const;
};

enum class ViolationCode {
  kCycle,
  kNonExogenousSensitive,
  kLatentConfounder,
  kBadTerm,
  kUnknownVariable,
  kDuplicateVariable,
  kOutcomeCount,
  kBadResolving,
  kBadModerator,
  kBadSensitive,
  kMediatorConfounding,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationCode code) const;
  std::string summary() const;
};

ValidationResult validate(const CausalModelSpec& spec);

// Kahn's algorithm; among ready vertices the earliest declared goes first.
// Throws ConfigError when the spec does not validate.
std::vector<std::string> topological_order(const CausalModelSpec& spec);

struct ColumnDescriptor {
  enum class Kind { kIntercept, kMain, kInteraction, kGroupBasis };
  Kind kind = Kind::kIntercept;
  std::string first;
  std::string second;
  std::size_t group = 0;
  std::size_t basis_index = 0;

  std::string name() const;
  bool operator==(const ColumnDescriptor&) const = default;
};

// Column layout of the design matrix for `form`. Spline forms expand to
// (group, basis function) pairs over all 2^m groups of `sensitive`.
std::vector<ColumnDescriptor> design_matrix_columns(
    const EquationForm& form, std::span<const std::string> sensitive);

nlohmann::json to_json(const CausalModelSpec& spec);
nlohmann::json to_json(const EquationForm& form);
CausalModelSpec spec_from_json(const nlohmann::json& doc);
EquationForm equation_from_json(const std::string& target,
                                const nlohmann::json& doc);
CausalModelSpec load_spec(const std::string& path);

}  // namespace cifrank
