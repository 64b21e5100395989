#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cifrank {

// Joint assignment of the binary sensitive attributes, in model order.
struct GroupKey {
  std::vector<std::pair<std::string, int>> assignments;

  // "G=1,R=0"
  std::string label() const;
  // Position among the 2^m keys in lexicographic order.
  std::size_t index() const;
  int value_of(const std::string& name) const;

  auto operator<=>(const GroupKey&) const = default;
  bool operator==(const GroupKey&) const = default;
};

// All 2^m keys over `sensitive`, in lexicographic order.
std::vector<GroupKey> enumerate_groups(std::span<const std::string> sensitive);

GroupKey group_from_index(std::span<const std::string> sensitive,
                          std::size_t index);

// Parses "G=0,R=1" (order must follow `sensitive`).
GroupKey parse_group_key(std::string_view text,
                         std::span<const std::string> sensitive);

nlohmann::json to_json(const GroupKey& key);
GroupKey group_from_json(const nlohmann::json& doc,
                         std::span<const std::string> sensitive);

}  // namespace cifrank
