#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cifrank/group.hpp"
#include "cifrank/scm.hpp"

namespace cifrank {

struct ColumnSpec {
  std::string name;
  ValueKind kind = ValueKind::kContinuous;
  Role role = Role::kCovariate;
};

struct Schema {
  std::vector<ColumnSpec> columns;

  std::optional<std::size_t> index_of(std::string_view name) const;
  const ColumnSpec& at(std::string_view name) const;
  // Sensitive columns in schema order.
  std::vector<std::string> sensitive() const;

  // One column per observed vertex, with the vertex's role and kind.
  static Schema from_model(const CausalModelSpec& spec);
};

nlohmann::json to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& doc);

struct Record {
  std::string id;
  std::size_t row = 0;
  std::map<std::string, double> values;

  double at(const std::string& column) const;
};

// Column-major table. Immutable: every mutator returns a new Dataset.
class Dataset {
 public:
  // Validates shape, finiteness and binary-column membership in {0, 1}.
  // Empty `ids` means 0-based row indices.
  Dataset(Schema schema, std::vector<std::vector<double>> columns,
          std::vector<std::string> ids = {}, std::string source_tag = {});

  std::size_t size() const { return rows_; }
  const Schema& schema() const { return schema_; }
  const std::string& source_tag() const { return source_tag_; }
  bool has_explicit_ids() const { return explicit_ids_; }

  std::span<const double> column(std::string_view name) const;
  double value(std::size_t row, std::string_view name) const;
  const std::string& id(std::size_t row) const { return ids_[row]; }
  std::optional<std::size_t> row_of(std::string_view id) const;
  Record record(std::size_t row) const;

  Dataset with_column(std::string_view name, std::vector<double> values) const;
  Dataset with_records(std::span<const Record> records) const;
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset with_source_tag(std::string tag) const;

  bool operator==(const Dataset& other) const;

 private:
  Schema schema_;
  std::vector<std::vector<double>> columns_;
  std::vector<std::string> ids_;
  std::string source_tag_;
  std::size_t rows_ = 0;
  bool explicit_ids_ = false;
};

// Comma separated, header row first, '.' decimal point, no empty cells.
// The header must name exactly the schema columns (any order) plus an
// optional leading-or-anywhere `id` column.
Dataset read_csv(std::istream& in, const Schema& schema,
                 std::string source_tag = {});
Dataset load_csv(const std::string& path, const Schema& schema);

// Shortest round-trip decimal for each value.
void write_csv(const Dataset& data, std::ostream& out);
void save_csv(const Dataset& data, const std::string& path);
std::string format_double(double value);

using GroupPartition = std::map<GroupKey, std::vector<std::size_t>>;

GroupPartition group_partition(const Dataset& data,
                               std::span<const std::string> sensitive);
GroupPartition group_partition(const Dataset& data);
std::map<GroupKey, double> group_proportions(
    const Dataset& data, std::span<const std::string> sensitive);
std::map<GroupKey, double> group_proportions(const Dataset& data);

// Row -> group lookup for metric loops. Only groups present in the data.
struct GroupIndex {
  std::vector<GroupKey> keys;
  std::vector<std::size_t> group_of;
  std::vector<std::size_t> sizes;

  static GroupIndex build(const Dataset& data,
                          std::span<const std::string> sensitive);
};

}  // namespace cifrank
