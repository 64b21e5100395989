#include "cifrank/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cifrank/error.hpp"

namespace cifrank {

using nlohmann::json;

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

const ColumnSpec& Schema::at(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw DataError("unknown column '" + std::string(name) + "'");
  return columns[*idx];
}

std::vector<std::string> Schema::sensitive() const {
  std::vector<std::string> names;
  for (const auto& c : columns) {
    if (c.role == Role::kSensitive) names.push_back(c.name);
  }
  return names;
}

Schema Schema::from_model(const CausalModelSpec& spec) {
  Schema schema;
  for (const auto& v : spec.vertices) {
    if (v.latent) continue;
    schema.columns.push_back({v.name, v.kind, v.role});
  }
  return schema;
}

json to_json(const Schema& schema) {
  json doc = json::array();
  for (const auto& c : schema.columns) {
    doc.push_back({{"name", c.name},
                   {"kind", to_string(c.kind)},
                   {"role", to_string(c.role)}});
  }
  return doc;
}

Schema schema_from_json(const json& doc) {
  Schema schema;
  try {
    for (const auto& c : doc) {
      schema.columns.push_back({c.at("name").get<std::string>(),
                                parse_value_kind(c.value("kind", "continuous")),
                                parse_role(c.value("role", "covariate"))});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed schema: ") + e.what());
  }
  return schema;
}

double Record::at(const std::string& column) const {
  auto it = values.find(column);
  if (it == values.end()) {
    throw DataError("record " + id + " has no column '" + column + "'");
  }
  return it->second;
}

Dataset::Dataset(Schema schema, std::vector<std::vector<double>> columns,
                 std::vector<std::string> ids, std::string source_tag)
    : schema_(std::move(schema)),
      columns_(std::move(columns)),
      ids_(std::move(ids)),
      source_tag_(std::move(source_tag)) {
  if (columns_.size() != schema_.columns.size()) {
    throw DataError("dataset has " + std::to_string(columns_.size()) +
                    " columns but schema declares " +
                    std::to_string(schema_.columns.size()));
  }
  std::set<std::string> names;
  for (const auto& c : schema_.columns) {
    if (!names.insert(c.name).second) {
      throw DataError("duplicate column '" + c.name + "'");
    }
  }
  rows_ = columns_.empty() ? ids_.size() : columns_.front().size();
  if (rows_ == 0) throw DataError("dataset must contain at least one row");
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const ColumnSpec& spec = schema_.columns[c];
    if (columns_[c].size() != rows_) {
      throw DataError("column '" + spec.name + "' has " +
                      std::to_string(columns_[c].size()) + " rows, expected " +
                      std::to_string(rows_));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
      const double v = columns_[c][r];
      if (!std::isfinite(v)) {
        throw DataError("row " + std::to_string(r + 1) + ": column '" + spec.name +
                        "' is not finite");
      }
      if (spec.kind == ValueKind::kBinary && v != 0.0 && v != 1.0) {
        throw DataError("row " + std::to_string(r + 1) + ": binary column '" +
                        spec.name + "' holds " + format_double(v));
      }
    }
  }
  explicit_ids_ = !ids_.empty();
  if (!explicit_ids_) {
    ids_.reserve(rows_);
    for (std::size_t r = 0; r < rows_; ++r) ids_.push_back(std::to_string(r));
  } else if (ids_.size() != rows_) {
    throw DataError("id count does not match row count");
  } else {
    std::set<std::string_view> seen;
    for (const auto& id : ids_) {
      if (!seen.insert(id).second) throw DataError("duplicate id '" + id + "'");
    }
  }
}

std::span<const double> Dataset::column(std::string_view name) const {
  auto idx = schema_.index_of(name);
  if (!idx) throw DataError("unknown column '" + std::string(name) + "'");
  return columns_[*idx];
}

double Dataset::value(std::size_t row, std::string_view name) const {
  return column(name)[row];
}

std::optional<std::size_t> Dataset::row_of(std::string_view id) const {
  if (!explicit_ids_) {
    std::size_t row = 0;
    auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), row);
    if (ec != std::errc() || ptr != id.data() + id.size() || row >= rows_) {
      return std::nullopt;
    }
    return row;
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (ids_[r] == id) return r;
  }
  return std::nullopt;
}

Record Dataset::record(std::size_t row) const {
  Record rec;
  rec.id = ids_.at(row);
  rec.row = row;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    rec.values.emplace(schema_.columns[c].name, columns_[c][row]);
  }
  return rec;
}

Dataset Dataset::with_column(std::string_view name,
                             std::vector<double> values) const {
  auto idx = schema_.index_of(name);
  if (!idx) throw DataError("unknown column '" + std::string(name) + "'");
  auto columns = columns_;
  columns[*idx] = std::move(values);
  return Dataset(schema_, std::move(columns),
                 explicit_ids_ ? ids_ : std::vector<std::string>{},
                 source_tag_);
}

Dataset Dataset::with_records(std::span<const Record> records) const {
  if (records.size() != rows_) {
    throw DataError("record count does not match dataset");
  }
  auto columns = columns_;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      columns[c][r] = records[r].at(schema_.columns[c].name);
    }
  }
  return Dataset(schema_, std::move(columns),
                 explicit_ids_ ? ids_ : std::vector<std::string>{},
                 source_tag_);
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<std::vector<double>> columns(columns_.size());
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    columns[c].reserve(rows.size());
    for (std::size_t r : rows) columns[c].push_back(columns_[c].at(r));
  }
  // Subsets keep the parent's identifiers so records stay traceable.
  ids.reserve(rows.size());
  for (std::size_t r : rows) ids.push_back(ids_.at(r));
  return Dataset(schema_, std::move(columns), std::move(ids), source_tag_);
}

Dataset Dataset::with_source_tag(std::string tag) const {
  Dataset copy = *this;
  copy.source_tag_ = std::move(tag);
  return copy;
}

bool Dataset::operator==(const Dataset& other) const {
  if (rows_ != other.rows_ || ids_ != other.ids_ ||
      schema_.columns.size() != other.schema_.columns.size()) {
    return false;
  }
  for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
    const auto& a = schema_.columns[c];
    const auto& b = other.schema_.columns[c];
    if (a.name != b.name || a.kind != b.kind || a.role != b.role) return false;
  }
  return columns_ == other.columns_;
}

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& cell : cells) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) {
      cell.remove_prefix(1);
    }
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) {
      cell.remove_suffix(1);
    }
  }
  return cells;
}

bool parse_number(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() &&
         std::isfinite(out);
}

}  // namespace

Dataset read_csv(std::istream& in, const Schema& schema,
                 std::string source_tag) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV input is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_line(line);
  std::vector<std::optional<std::size_t>> target(header.size());
  std::optional<std::size_t> id_cell;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name(header[i]);
    if (!seen.insert(name).second) {
      throw DataError("header mismatch: column '" + name + "' repeated");
    }
    if (name == "id" && !schema.index_of("id")) {
      id_cell = i;
      continue;
    }
    target[i] = schema.index_of(name);
    if (!target[i]) {
      throw DataError("header mismatch: unexpected column '" + name + "'");
    }
  }
  for (const auto& c : schema.columns) {
    if (!seen.count(c.name)) {
      throw DataError("header mismatch: missing column '" + c.name + "'");
    }
  }

  std::vector<std::vector<double>> columns(schema.columns.size());
  std::vector<std::string> ids;
  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    const std::string where =
        "row " + std::to_string(row + 1) + " (line " + std::to_string(line_no) + ")";
    if (cells.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].empty()) {
        throw DataError(where + ": empty cell in column '" +
                        std::string(header[i]) + "'");
      }
      if (id_cell && i == *id_cell) {
        ids.emplace_back(cells[i]);
        continue;
      }
      const ColumnSpec& spec = schema.columns[*target[i]];
      double value = 0.0;
      if (!parse_number(cells[i], value)) {
        throw DataError(where + ": non-numeric value '" +
                        std::string(cells[i]) + "' in column '" + spec.name +
                        "'");
      }
      if (spec.kind == ValueKind::kBinary && value != 0.0 && value != 1.0) {
        throw DataError(where + ": binary column '" + spec.name +
                        "' holds '" + std::string(cells[i]) + "'");
      }
      columns[*target[i]].push_back(value);
    }
    ++row;
  }
  if (row == 0) throw DataError("CSV has a header but no data rows");
  return Dataset(schema, std::move(columns), std::move(ids),
                 std::move(source_tag));
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV '" + path + "'");
  return read_csv(in, schema, path);
}

std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw DataError("cannot format number");
  return std::string(buffer, ptr);
}

void write_csv(const Dataset& data, std::ostream& out) {
  const auto& cols = data.schema().columns;
  if (data.has_explicit_ids()) out << "id,";
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out << ',';
    out << cols[c].name;
  }
  out << '\n';
  std::vector<std::span<const double>> views;
  for (const auto& c : cols) views.push_back(data.column(c.name));
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.has_explicit_ids()) out << data.id(r) << ',';
    for (std::size_t c = 0; c < views.size(); ++c) {
      if (c) out << ',';
      out << format_double(views[c][r]);
    }
    out << '\n';
  }
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV '" + path + "'");
  write_csv(data, out);
}

GroupPartition group_partition(const Dataset& data,
                               std::span<const std::string> sensitive) {
  std::vector<std::span<const double>> cols;
  for (const auto& name : sensitive) {
    const ColumnSpec& spec = data.schema().at(name);
    if (spec.kind != ValueKind::kBinary) {
      throw DataError("sensitive column '" + name + "' is not binary");
    }
    cols.push_back(data.column(name));
  }
  GroupPartition partition;
  std::unordered_map<std::size_t, std::vector<std::size_t>*> by_index;
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::size_t index = 0;
    for (const auto& col : cols) index = (index << 1) | (col[r] != 0.0);
    auto it = by_index.find(index);
    if (it == by_index.end()) {
      auto& rows = partition[group_from_index(sensitive, index)];
      it = by_index.emplace(index, &rows).first;
    }
    it->second->push_back(r);
  }
  return partition;
}

GroupPartition group_partition(const Dataset& data) {
  const auto sensitive = data.schema().sensitive();
  return group_partition(data, sensitive);
}

std::map<GroupKey, double> group_proportions(
    const Dataset& data, std::span<const std::string> sensitive) {
  std::map<GroupKey, double> result;
  const double n = static_cast<double>(data.size());
  for (const auto& [key, rows] : group_partition(data, sensitive)) {
    result[key] = static_cast<double>(rows.size()) / n;
  }
  return result;
}

std::map<GroupKey, double> group_proportions(const Dataset& data) {
  const auto sensitive = data.schema().sensitive();
  return group_proportions(data, sensitive);
}

GroupIndex GroupIndex::build(const Dataset& data,
                             std::span<const std::string> sensitive) {
  GroupIndex index;
  index.group_of.assign(data.size(), 0);
  for (const auto& [key, rows] : group_partition(data, sensitive)) {
    const std::size_t g = index.keys.size();
    index.keys.push_back(key);
    index.sizes.push_back(rows.size());
    for (std::size_t r : rows) index.group_of[r] = g;
  }
  return index;
}

}  // namespace cifrank
