#include "cifrank/scm.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "cifrank/error.hpp"
#include "cifrank/group.hpp"

namespace cifrank {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSensitive:
      return "sensitive";
    case Role::kMediator:
      return "mediator";
    case Role::kModerator:
      return "moderator";
    case Role::kOutcome:
      return "outcome";
    case Role::kCovariate:
      return "covariate";
  }
  return "covariate";
}

std::string_view to_string(ValueKind kind) {
  return kind == ValueKind::kBinary ? "binary" : "continuous";
}

Role parse_role(std::string_view text) {
  if (text == "sensitive") return Role::kSensitive;
  if (text == "mediator") return Role::kMediator;
  if (text == "moderator") return Role::kModerator;
  if (text == "outcome") return Role::kOutcome;
  if (text == "covariate") return Role::kCovariate;
  throw ConfigError("unknown variable role '" + std::string(text) + "'");
}

ValueKind parse_value_kind(std::string_view text) {
  if (text == "binary") return ValueKind::kBinary;
  if (text == "continuous") return ValueKind::kContinuous;
  throw ConfigError("unknown value kind '" + std::string(text) + "'");
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::kCycle:
      return "CYCLE";
    case ViolationCode::kNonExogenousSensitive:
      return "NON_EXOGENOUS_SENSITIVE";
    case ViolationCode::kLatentConfounder:
      return "LATENT_CONFOUNDER";
    case ViolationCode::kBadTerm:
      return "BAD_TERM";
    case ViolationCode::kUnknownVariable:
      return "UNKNOWN_VARIABLE";
    case ViolationCode::kDuplicateVariable:
      return "DUPLICATE_VARIABLE";
    case ViolationCode::kOutcomeCount:
      return "OUTCOME_COUNT";
    case ViolationCode::kBadResolving:
      return "BAD_RESOLVING";
    case ViolationCode::kBadModerator:
      return "BAD_MODERATOR";
    case ViolationCode::kBadSensitive:
      return "BAD_SENSITIVE";
    case ViolationCode::kMediatorConfounding:
      return "MEDIATOR_CONFOUNDING";
  }
  return "UNKNOWN";
}

const VariableSpec* CausalModelSpec::find(std::string_view name) const {
  for (const auto& v : vertices) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

std::vector<std::string> CausalModelSpec::parents(std::string_view name) const {
  std::vector<std::string> result;
  for (const auto& v : vertices) {
    for (const auto& e : edges) {
      if (e.target == name && e.source == v.name &&
          std::find(result.begin(), result.end(), v.name) == result.end()) {
        result.push_back(v.name);
      }
    }
  }
  return result;
}

bool CausalModelSpec::is_exogenous(std::string_view name) const {
  return std::none_of(edges.begin(), edges.end(),
                      [&](const Edge& e) { return e.target == name; });
}

bool CausalModelSpec::is_sensitive(std::string_view name) const {
  return std::find(sensitive.begin(), sensitive.end(), name) != sensitive.end();
}

bool CausalModelSpec::is_resolving(std::string_view name) const {
  auto it = resolving.find(std::string(name));
  return it != resolving.end() && it->second;
}

std::optional<std::string> CausalModelSpec::outcome() const {
  std::optional<std::string> found;
  for (const auto& v : vertices) {
    if (v.role == Role::kOutcome) {
      if (found) return std::nullopt;
      found = v.name;
    }
  }
  return found;
}

EquationForm CausalModelSpec::equation_for(std::string_view name) const {
  auto it = equations.find(std::string(name));
  if (it != equations.end()) return it->second;
  EquationForm form;
  form.target = std::string(name);
  form.main_effects = parents(name);
  return form;
}

namespace {

std::set<std::string> reachable(const std::vector<Edge>& edges,
                                const std::vector<std::string>& starts,
                                bool forward) {
  std::set<std::string> seen;
  std::vector<std::string> stack(starts.begin(), starts.end());
  while (!stack.empty()) {
    std::string node = std::move(stack.back());
    stack.pop_back();
    for (const auto& e : edges) {
      const std::string& from = forward ? e.source : e.target;
      const std::string& to = forward ? e.target : e.source;
      if (from == node && seen.insert(to).second) stack.push_back(to);
    }
  }
  return seen;
}

// Returns the declaration-order topological sort, or nullopt on a cycle.
std::optional<std::vector<std::string>> kahn(const CausalModelSpec& spec) {
  const std::size_t n = spec.vertices.size();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < n; ++i) position[spec.vertices[i].name] = i;

  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& e : spec.edges) {
    auto s = position.find(e.source);
    auto t = position.find(e.target);
    if (s == position.end() || t == position.end()) continue;
    children[s->second].push_back(t->second);
    ++indegree[t->second];
  }

  std::priority_queue<std::size_t, std::vector<std::size_t>,
                      std::greater<std::size_t>>
      ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::string> order;
  order.reserve(n);
  while (!ready.empty()) {
    std::size_t next = ready.top();
    ready.pop();
    order.push_back(spec.vertices[next].name);
    for (std::size_t child : children[next]) {
      if (--indegree[child] == 0) ready.push(child);
    }
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

}  // namespace

std::set<std::string> CausalModelSpec::sensitive_descendants() const {
  return reachable(edges, sensitive, /*forward=*/true);
}

std::set<std::string> CausalModelSpec::ancestors(std::string_view name) const {
  return reachable(edges, {std::string(name)}, /*forward=*/false);
}

bool ValidationResult::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.code == code; });
}

std::string ValidationResult::summary() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << to_string(violations[i].code) << ": " << violations[i].message;
  }
  return out.str();
}

namespace {

void check_equation(const CausalModelSpec& spec, const EquationForm& form,
                    std::vector<Violation>& out) {
  auto bad = [&](const std::string& message) {
    out.push_back({ViolationCode::kBadTerm, form.target + ": " + message});
  };
  const VariableSpec* target = spec.find(form.target);
  if (target == nullptr) {
    out.push_back({ViolationCode::kUnknownVariable,
                   "equation for undeclared variable '" + form.target + "'"});
    return;
  }
  const auto parents = spec.parents(form.target);
  if (parents.empty()) {
    bad("exogenous variable cannot have an equation");
    return;
  }
  auto is_parent = [&](const std::string& name) {
    return std::find(parents.begin(), parents.end(), name) != parents.end();
  };
  std::set<std::string> seen;
  for (const auto& term : form.main_effects) {
    if (!is_parent(term)) bad("term '" + term + "' is not a parent");
    if (!seen.insert(term).second) bad("duplicate term '" + term + "'");
  }
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& [a, b] : form.interactions) {
    if (a == b) {
      bad("interaction pair repeats '" + a + "'");
      continue;
    }
    if (!spec.is_sensitive(a) || !spec.is_sensitive(b)) {
      bad("interaction " + a + "*" + b + " must join sensitive attributes");
    }
    if (!is_parent(a) || !is_parent(b)) {
      bad("interaction " + a + "*" + b + " references a non-parent");
    }
    if (!seen.count(a) || !seen.count(b)) {
      bad("interaction " + a + "*" + b +
          " requires both attributes as main effects");
    }
    if (!pairs.insert(std::minmax(a, b)).second) {
      bad("duplicate interaction " + a + "*" + b);
    }
  }
  if (form.basis.is_spline()) {
    if (form.basis.knot_count < 2) bad("spline needs at least 2 knots");
    if (form.main_effects.size() != 1) {
      bad("per-group spline takes exactly one moderator term");
    } else {
      const VariableSpec* mod = spec.find(form.main_effects.front());
      if (mod == nullptr || mod->role != Role::kModerator ||
          mod->kind != ValueKind::kContinuous) {
        bad("per-group spline predictor must be a continuous moderator");
      }
    }
    if (!form.interactions.empty()) {
      bad("per-group spline cannot carry interaction terms");
    }
    for (const auto& s : spec.sensitive) {
      if (!is_parent(s)) bad("per-group spline needs parent '" + s + "'");
    }
  }
}

}  // namespace

ValidationResult validate(const CausalModelSpec& spec) {
  std::vector<Violation> out;
  std::set<std::string> names;
  for (const auto& v : spec.vertices) {
    if (!names.insert(v.name).second) {
      out.push_back({ViolationCode::kDuplicateVariable,
                     "variable '" + v.name + "' declared twice"});
    }
    if (v.latent) {
      out.push_back({ViolationCode::kLatentConfounder,
                     "latent variable '" + v.name + "' is not supported"});
    }
  }
  bool edges_known = true;
  for (const auto& e : spec.edges) {
    for (const auto* end : {&e.source, &e.target}) {
      if (!names.count(*end)) {
        edges_known = false;
        out.push_back({ViolationCode::kUnknownVariable,
                       "edge references unknown variable '" + *end + "'"});
      }
    }
  }
  if (!kahn(spec)) {
    out.push_back({ViolationCode::kCycle, "edge relation contains a cycle"});
  }

  std::size_t outcomes = 0;
  for (const auto& v : spec.vertices) outcomes += v.role == Role::kOutcome;
  if (outcomes != 1) {
    out.push_back({ViolationCode::kOutcomeCount,
                   "expected exactly one outcome, found " +
                       std::to_string(outcomes)});
  }

  for (const auto& s : spec.sensitive) {
    const VariableSpec* v = spec.find(s);
    if (v == nullptr) {
      out.push_back({ViolationCode::kUnknownVariable,
                     "sensitive attribute '" + s + "' is not declared"});
      continue;
    }
    if (v->role != Role::kSensitive || v->kind != ValueKind::kBinary) {
      out.push_back({ViolationCode::kBadSensitive,
                     "'" + s + "' must have role sensitive and kind binary"});
    }
    if (!spec.is_exogenous(s)) {
      out.push_back({ViolationCode::kNonExogenousSensitive,
                     "sensitive attribute '" + s + "' has incoming edges"});
    }
  }
  for (const auto& v : spec.vertices) {
    if (v.role == Role::kSensitive && !spec.is_sensitive(v.name)) {
      out.push_back({ViolationCode::kBadSensitive,
                     "'" + v.name + "' has role sensitive but is not listed"});
    }
  }

  // The remaining checks walk the graph and need it to be well formed.
  const bool graph_ok = edges_known && kahn(spec).has_value();
  if (graph_ok) {
    for (const auto& e : spec.edges) {
      const VariableSpec* src = spec.find(e.source);
      const VariableSpec* dst = spec.find(e.target);
      if (dst->role == Role::kModerator && spec.is_sensitive(e.source)) {
        out.push_back({ViolationCode::kBadModerator,
                       "moderator '" + e.target +
                           "' has an incoming edge from sensitive '" +
                           e.source + "'"});
      }
      if (src->role == Role::kMediator && dst->role == Role::kMediator) {
        out.push_back({ViolationCode::kMediatorConfounding,
                       "mediator '" + e.source + "' causes mediator '" +
                           e.target + "'"});
      }
    }

    const auto outcome = spec.outcome();
    const auto descendants = spec.sensitive_descendants();
    const auto outcome_ancestors =
        outcome ? spec.ancestors(*outcome) : std::set<std::string>{};
    for (const auto& [name, flag] : spec.resolving) {
      if (!names.count(name)) {
        out.push_back({ViolationCode::kUnknownVariable,
                       "resolving flag for unknown variable '" + name + "'"});
        continue;
      }
      if (!descendants.count(name) || !outcome_ancestors.count(name)) {
        out.push_back({ViolationCode::kBadResolving,
                       "'" + name +
                           "' is not on a path from a sensitive attribute to "
                           "the outcome"});
      }
    }
    for (const auto& [name, form] : spec.equations) {
      if (form.target != name) {
        out.push_back({ViolationCode::kBadTerm,
                       "equation keyed '" + name + "' targets '" +
                           form.target + "'"});
      }
      check_equation(spec, form, out);
    }
  }
  return {std::move(out)};
}

std::vector<std::string> topological_order(const CausalModelSpec& spec) {
  const auto result = validate(spec);
  if (!result.ok()) {
    throw ConfigError("causal model does not validate: " + result.summary());
  }
  return *kahn(spec);
}

std::string ColumnDescriptor::name() const {
  switch (kind) {
    case Kind::kIntercept:
      return "(intercept)";
    case Kind::kMain:
      return first;
    case Kind::kInteraction:
      return first + "*" + second;
    case Kind::kGroupBasis:
      return "[" + first + "]:ns" + std::to_string(basis_index);
  }
  return {};
}

std::vector<ColumnDescriptor> design_matrix_columns(
    const EquationForm& form, std::span<const std::string> sensitive) {
  using Kind = ColumnDescriptor::Kind;
  std::vector<ColumnDescriptor> columns;
  if (form.basis.is_spline()) {
    const auto groups = enumerate_groups(sensitive);
    const auto knots = static_cast<std::size_t>(form.basis.knot_count);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t j = 0; j < knots; ++j) {
        ColumnDescriptor c;
        c.kind = Kind::kGroupBasis;
        c.first = groups[g].label();
        c.second = form.main_effects.empty() ? "" : form.main_effects.front();
        c.group = g;
        c.basis_index = j;
        columns.push_back(std::move(c));
      }
    }
    return columns;
  }
  if (form.intercept) columns.push_back({Kind::kIntercept, {}, {}, 0, 0});
  for (const auto& term : form.main_effects) {
    columns.push_back({Kind::kMain, term, {}, 0, 0});
  }
  for (const auto& [a, b] : form.interactions) {
    columns.push_back({Kind::kInteraction, a, b, 0, 0});
  }
  return columns;
}

json to_json(const EquationForm& form) {
  json doc;
  doc["main_effects"] = form.main_effects;
  json pairs = json::array();
  for (const auto& [a, b] : form.interactions) pairs.push_back({a, b});
  doc["interactions"] = pairs;
  if (form.basis.is_spline()) {
    doc["basis"] = {{"type", "per_group_spline"},
                    {"knots", form.basis.knot_count}};
  } else {
    doc["basis"] = "linear";
  }
  doc["intercept"] = form.intercept;
  return doc;
}

json to_json(const CausalModelSpec& spec) {
  json doc;
  json vertices = json::array();
  for (const auto& v : spec.vertices) {
    json entry = {{"name", v.name},
                  {"role", to_string(v.role)},
                  {"kind", to_string(v.kind)}};
    if (v.latent) entry["latent"] = true;
    vertices.push_back(std::move(entry));
  }
  doc["vertices"] = vertices;
  json edges = json::array();
  for (const auto& e : spec.edges) edges.push_back({e.source, e.target});
  doc["edges"] = edges;
  doc["sensitive"] = spec.sensitive;
  doc["resolving"] = json::object();
  for (const auto& [name, flag] : spec.resolving) doc["resolving"][name] = flag;
  doc["equations"] = json::object();
  for (const auto& [name, form] : spec.equations) {
    doc["equations"][name] = to_json(form);
  }
  return doc;
}

EquationForm equation_from_json(const std::string& target, const json& doc) {
  EquationForm form;
  form.target = target;
  try {
    if (doc.contains("main_effects")) {
      form.main_effects = doc.at("main_effects").get<std::vector<std::string>>();
    }
    if (doc.contains("interactions")) {
      for (const auto& pair : doc.at("interactions")) {
        if (!pair.is_array() || pair.size() != 2) {
          throw ConfigError("interaction for '" + target +
                            "' must be a pair of names");
        }
        form.interactions.emplace_back(pair[0].get<std::string>(),
                                       pair[1].get<std::string>());
      }
    }
    if (doc.contains("basis")) {
      const json& basis = doc.at("basis");
      if (basis.is_string() && basis.get<std::string>() == "linear") {
        form.basis = Basis::linear();
      } else if (basis.is_object() &&
                 basis.value("type", "") == "per_group_spline") {
        form.basis = Basis::per_group_spline(basis.value("knots", 4));
      } else {
        throw ConfigError("unknown basis for '" + target + "'");
      }
    }
    form.intercept = doc.value("intercept", true);
  } catch (const json::exception& e) {
    throw ConfigError("malformed equation for '" + target + "': " + e.what());
  }
  return form;
}

CausalModelSpec spec_from_json(const json& doc) {
  CausalModelSpec spec;
  try {
    for (const auto& v : doc.at("vertices")) {
      VariableSpec var;
      var.name = v.at("name").get<std::string>();
      var.role = parse_role(v.value("role", "covariate"));
      var.kind = parse_value_kind(v.value("kind", "continuous"));
      var.latent = v.value("latent", false);
      spec.vertices.push_back(std::move(var));
    }
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 2) {
        throw ConfigError("edge must be a [source, target] pair");
      }
      spec.edges.push_back({e[0].get<std::string>(), e[1].get<std::string>()});
    }
    spec.sensitive = doc.at("sensitive").get<std::vector<std::string>>();
    if (doc.contains("resolving")) {
      spec.resolving = doc.at("resolving").get<std::map<std::string, bool>>();
    }
    if (doc.contains("equations")) {
      for (const auto& [name, eq] : doc.at("equations").items()) {
        spec.equations[name] = equation_from_json(name, eq);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model spec: ") + e.what());
  }
  return spec;
}

CausalModelSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model spec '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("model spec '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return spec_from_json(doc);
}

}  // namespace cifrank
