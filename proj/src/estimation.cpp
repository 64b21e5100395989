#include "cifrank/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "cifrank/error.hpp"

namespace cifrank {

using nlohmann::json;

namespace {

constexpr double kRankTolerance = 1e-10;

std::size_t group_of(const std::vector<std::string>& sensitive,
                     const ValueLookup& lookup) {
  std::size_t index = 0;
  for (const auto& name : sensitive) {
    index = (index << 1) | static_cast<std::size_t>(lookup(name) != 0.0);
  }
  return index;
}

// Design row for one observation. Spline rows are zero outside the block of
// the observation's group.
void design_row(const FittedEquation& eq, const ValueLookup& lookup,
                std::span<double> out) {
  using Kind = ColumnDescriptor::Kind;
  if (eq.form.basis.is_spline()) {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t g = group_of(eq.sensitive, lookup);
    if (!eq.has_group(g)) {
      throw DataError("no fitted spline for group " +
                      group_from_index(eq.sensitive, g).label() + " in '" +
                      eq.form.target + "'");
    }
    const auto& basis = *eq.group_bases[g];
    const std::size_t k = basis.size();
    basis.evaluate(lookup(eq.form.main_effects.front()),
                   out.subspan(g * k, k));
    return;
  }
  for (std::size_t j = 0; j < eq.columns.size(); ++j) {
    const auto& c = eq.columns[j];
    switch (c.kind) {
      case Kind::kIntercept:
        out[j] = 1.0;
        break;
      case Kind::kMain:
        out[j] = lookup(c.first);
        break;
      case Kind::kInteraction:
        out[j] = lookup(c.first) * lookup(c.second);
        break;
      case Kind::kGroupBasis:
        out[j] = 0.0;
        break;
    }
  }
}

ValueLookup row_lookup(const Dataset& data, std::size_t row) {
  return [&data, row](const std::string& name) {
    return data.value(row, name);
  };
}

// Solves min ||A b - y|| and names the first column that is numerically
// dependent on the ones before it.
Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& design,
                                    const Eigen::VectorXd& y,
                                    const std::vector<std::string>& names,
                                    const std::string& context) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (n < p) {
    throw NumericalError("singular fit in " + context + ": " +
                         std::to_string(n) + " rows for " + std::to_string(p) +
                         " columns");
  }
  double max_norm = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    max_norm = std::max(max_norm, design.col(j).norm());
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  const auto& packed = qr.matrixQR();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::abs(packed(j, j)) <= kRankTolerance * max_norm) {
      throw NumericalError("singular fit in " + context + ": column '" +
                           names[static_cast<std::size_t>(j)] +
                           "' is constant or collinear with earlier columns");
    }
  }
  Eigen::VectorXd b = qr.solve(y);
  if (!b.allFinite()) {
    throw NumericalError("non-finite coefficients in " + context);
  }
  return b;
}

FitDiagnostics diagnose(std::span<const double> observed,
                        std::span<const double> residuals,
                        std::size_t parameters) {
  const double n = static_cast<double>(observed.size());
  double mean = 0.0;
  for (double v : observed) mean += v;
  mean /= n;
  double ss_total = 0.0;
  double ss_resid = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ss_total += (observed[i] - mean) * (observed[i] - mean);
    ss_resid += residuals[i] * residuals[i];
  }
  FitDiagnostics d;
  d.r_squared = ss_total > 0.0 ? 1.0 - ss_resid / ss_total : 1.0;
  const double dof = n - static_cast<double>(parameters);
  d.residual_variance = dof > 0.0 ? ss_resid / dof : 0.0;
  return d;
}

void require_columns(const Dataset& data, const EquationForm& form,
                     std::span<const std::string> sensitive) {
  auto need = [&](const std::string& name) {
    if (!data.schema().index_of(name)) {
      throw DataError("equation '" + form.target + "' needs column '" + name +
                      "'");
    }
  };
  need(form.target);
  for (const auto& t : form.main_effects) need(t);
  for (const auto& [a, b] : form.interactions) {
    need(a);
    need(b);
  }
  if (form.basis.is_spline()) {
    for (const auto& s : sensitive) need(s);
  }
}

void store_residuals(FittedEquation& eq, const Dataset& data) {
  const auto observed = data.column(eq.form.target);
  eq.residuals.resize(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    eq.residuals[r] = observed[r] - eq.predict(row_lookup(data, r));
  }
  eq.diagnostics = diagnose(observed, eq.residuals, eq.coefficients.size());
}

}  // namespace

double FittedEquation::coefficient(std::string_view column_name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].name() == column_name) return coefficients[j];
  }
  throw ConfigError("equation '" + form.target + "' has no column '" +
                    std::string(column_name) + "'");
}

bool FittedEquation::has_group(std::size_t group) const {
  return group < group_bases.size() && group_bases[group].has_value();
}

double FittedEquation::predict(const ValueLookup& lookup) const {
  std::vector<double> row(columns.size());
  design_row(*this, lookup, row);
  double sum = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) sum += coefficients[j] * row[j];
  return sum;
}

double FittedEquation::predict(const Record& record) const {
  return predict([&record](const std::string& name) { return record.at(name); });
}

bool FittedModel::has_residuals() const {
  return std::all_of(equations.begin(), equations.end(), [](const auto& kv) {
    return !kv.second.residuals.empty();
  });
}

FittedEquation fit_linear(const Dataset& data, const EquationForm& form,
                          std::span<const std::string> sensitive) {
  if (form.basis.is_spline()) {
    throw ConfigError("fit_linear called with a spline form for '" +
                      form.target + "'");
  }
  require_columns(data, form, sensitive);
  FittedEquation eq;
  eq.form = form;
  eq.sensitive.assign(sensitive.begin(), sensitive.end());
  eq.columns = design_matrix_columns(form, sensitive);

  const std::size_t n = data.size();
  const std::size_t p = eq.columns.size();
  if (p == 0) throw ConfigError("equation '" + form.target + "' has no terms");
  std::vector<std::string> names;
  for (const auto& c : eq.columns) names.push_back(c.name());

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd y(n);
  const auto observed = data.column(form.target);
  std::vector<double> row(p);
  for (std::size_t r = 0; r < n; ++r) {
    design_row(eq, row_lookup(data, r), row);
    for (std::size_t j = 0; j < p; ++j) design(r, j) = row[j];
    y(r) = observed[r];
  }
  const Eigen::VectorXd b =
      solve_least_squares(design, y, names, "equation '" + form.target + "'");
  eq.coefficients.assign(b.data(), b.data() + b.size());
  store_residuals(eq, data);
  return eq;
}

FittedEquation fit_per_group_spline(const Dataset& data,
                                    const EquationForm& form,
                                    std::span<const std::string> sensitive) {
  if (!form.basis.is_spline() || form.main_effects.size() != 1) {
    throw ConfigError("fit_per_group_spline needs a spline form with one "
                      "moderator for '" + form.target + "'");
  }
  require_columns(data, form, sensitive);
  FittedEquation eq;
  eq.form = form;
  eq.sensitive.assign(sensitive.begin(), sensitive.end());
  eq.columns = design_matrix_columns(form, sensitive);
  eq.coefficients.assign(eq.columns.size(), 0.0);
  const std::size_t group_count = std::size_t{1} << sensitive.size();
  eq.group_bases.assign(group_count, std::nullopt);

  const auto knot_count = static_cast<std::size_t>(form.basis.knot_count);
  const std::string& moderator = form.main_effects.front();
  const auto x = data.column(moderator);
  const auto y = data.column(form.target);

  // The design is block diagonal across groups, so the joint least-squares
  // problem separates into one independent fit per group.
  for (const auto& [key, rows] : group_partition(data, sensitive)) {
    const std::size_t g = key.index();
    const std::string context =
        "equation '" + form.target + "' group " + key.label();
    if (rows.size() < knot_count + 2) {
      throw DataError(context + " has " + std::to_string(rows.size()) +
                      " records; a " + std::to_string(knot_count) +
                      "-knot spline needs at least " +
                      std::to_string(knot_count + 2));
    }
    std::vector<double> gx;
    gx.reserve(rows.size());
    for (std::size_t r : rows) gx.push_back(x[r]);
    const auto [lo, hi] = std::minmax_element(gx.begin(), gx.end());
    if (*lo == *hi) {
      throw DataError(context + ": moderator '" + moderator +
                      "' is constant within the group");
    }
    auto knots = NaturalCubicBasis::quantile_knots(gx, form.basis.knot_count);
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (!(knots[i] > knots[i - 1])) {
        throw DataError(context + ": moderator '" + moderator +
                        "' has too many ties for " +
                        std::to_string(knot_count) + " distinct knots");
      }
    }
    NaturalCubicBasis basis(std::move(knots));

    Eigen::MatrixXd design(rows.size(), knot_count);
    Eigen::VectorXd target(rows.size());
    std::vector<double> b(knot_count);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      basis.evaluate(gx[i], b);
      for (std::size_t j = 0; j < knot_count; ++j) design(i, j) = b[j];
      target(i) = y[rows[i]];
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < knot_count; ++j) {
      names.push_back(eq.columns[g * knot_count + j].name());
    }
    const Eigen::VectorXd coef =
        solve_least_squares(design, target, names, context);
    for (std::size_t j = 0; j < knot_count; ++j) {
      eq.coefficients[g * knot_count + j] = coef(static_cast<Eigen::Index>(j));
    }
    eq.group_bases[g] = std::move(basis);
  }
  store_residuals(eq, data);
  return eq;
}

FittedModel fit_model(const Dataset& data, const CausalModelSpec& spec) {
  const auto order = topological_order(spec);
  for (const auto& v : spec.vertices) {
    auto idx = data.schema().index_of(v.name);
    if (!idx) {
      throw DataError("dataset lacks column for variable '" + v.name + "'");
    }
    if (data.schema().columns[*idx].kind != v.kind) {
      throw DataError("column '" + v.name + "' kind does not match the model");
    }
  }
  FittedModel model;
  model.spec = spec;
  for (const auto& name : order) {
    if (spec.is_exogenous(name)) continue;
    const EquationForm form = spec.equation_for(name);
    try {
      model.equations.emplace(
          name, form.basis.is_spline()
                    ? fit_per_group_spline(data, form, spec.sensitive)
                    : fit_linear(data, form, spec.sensitive));
    } catch (const Error& e) {
      const std::string message = "fitting '" + name + "': " + e.what();
      switch (e.kind()) {
        case ErrorKind::kConfig: throw ConfigError(message);
        case ErrorKind::kData: throw DataError(message);
        case ErrorKind::kNumerical: throw NumericalError(message);
      }
      throw;
    }
  }
  return model;
}

json to_json(const FittedEquation& eq) {
  json doc;
  doc["form"] = to_json(eq.form);
  json names = json::array();
  for (const auto& c : eq.columns) names.push_back(c.name());
  doc["columns"] = names;
  doc["coefficients"] = eq.coefficients;
  if (eq.form.basis.is_spline()) {
    json knots = json::object();
    for (std::size_t g = 0; g < eq.group_bases.size(); ++g) {
      if (eq.group_bases[g]) {
        knots[group_from_index(eq.sensitive, g).label()] =
            eq.group_bases[g]->knots();
      }
    }
    doc["knots"] = knots;
  }
  doc["diagnostics"] = {{"r_squared", eq.diagnostics.r_squared},
                        {"residual_variance", eq.diagnostics.residual_variance}};
  return doc;
}

json to_json(const FittedModel& model) {
  json doc;
  doc["spec"] = to_json(model.spec);
  doc["equations"] = json::object();
  for (const auto& [name, eq] : model.equations) {
    doc["equations"][name] = to_json(eq);
  }
  return doc;
}

FittedModel fitted_model_from_json(const json& doc) {
  FittedModel model;
  try {
    model.spec = spec_from_json(doc.at("spec"));
    const auto result = validate(model.spec);
    if (!result.ok()) {
      throw ConfigError("fitted model spec is invalid: " + result.summary());
    }
    for (const auto& [name, entry] : doc.at("equations").items()) {
      FittedEquation eq;
      eq.form = equation_from_json(name, entry.at("form"));
      eq.sensitive = model.spec.sensitive;
      eq.columns = design_matrix_columns(eq.form, eq.sensitive);
      const auto names = entry.at("columns").get<std::vector<std::string>>();
      if (names.size() != eq.columns.size()) {
        throw ConfigError("equation '" + name + "' column count mismatch");
      }
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] != eq.columns[j].name()) {
          throw ConfigError("equation '" + name + "' column '" + names[j] +
                            "' does not match its form");
        }
      }
      eq.coefficients = entry.at("coefficients").get<std::vector<double>>();
      if (eq.coefficients.size() != eq.columns.size()) {
        throw ConfigError("equation '" + name + "' coefficient count mismatch");
      }
      if (eq.form.basis.is_spline()) {
        const std::size_t count = std::size_t{1} << eq.sensitive.size();
        eq.group_bases.assign(count, std::nullopt);
        for (const auto& [label, knots] : entry.at("knots").items()) {
          const GroupKey key = parse_group_key(label, eq.sensitive);
          eq.group_bases[key.index()] =
              NaturalCubicBasis(knots.get<std::vector<double>>());
        }
      }
      const auto& diag = entry.at("diagnostics");
      eq.diagnostics.r_squared = diag.at("r_squared").get<double>();
      eq.diagnostics.residual_variance =
          diag.at("residual_variance").get<double>();
      model.equations.emplace(name, std::move(eq));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed fitted model: ") + e.what());
  }
  return model;
}

FittedModel load_fitted_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fitted model '" + path + "'");
  try {
    return fitted_model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("fitted model '" + path + "' is not valid JSON: " +
                      e.what());
  }
}

std::string canonical_text(const FittedModel& model) {
  return to_json(model).dump();
}

}  // namespace cifrank
