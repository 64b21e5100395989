#include "cifrank/group.hpp"

#include "cifrank/error.hpp"

namespace cifrank {

std::string GroupKey::label() const {
  std::string out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (i) out += ',';
    out += assignments[i].first;
    out += '=';
    out += std::to_string(assignments[i].second);
  }
  return out;
}

std::size_t GroupKey::index() const {
  std::size_t index = 0;
  for (const auto& [name, value] : assignments) {
    index = (index << 1) | static_cast<std::size_t>(value != 0);
  }
  return index;
}

int GroupKey::value_of(const std::string& name) const {
  for (const auto& [attr, value] : assignments) {
    if (attr == name) return value;
  }
  throw ConfigError("group key " + label() + " has no attribute '" + name +
                    "'");
}

GroupKey group_from_index(std::span<const std::string> sensitive,
                          std::size_t index) {
  GroupKey key;
  const std::size_t m = sensitive.size();
  for (std::size_t j = 0; j < m; ++j) {
    const int bit = static_cast<int>((index >> (m - 1 - j)) & 1U);
    key.assignments.emplace_back(sensitive[j], bit);
  }
  return key;
}

std::vector<GroupKey> enumerate_groups(std::span<const std::string> sensitive) {
  std::vector<GroupKey> keys;
  const std::size_t count = std::size_t{1} << sensitive.size();
  keys.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    keys.push_back(group_from_index(sensitive, i));
  }
  return keys;
}

GroupKey parse_group_key(std::string_view text,
                         std::span<const std::string> sensitive) {
  GroupKey key;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = text.substr(pos, comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("malformed group assignment '" + std::string(item) +
                        "', expected NAME=0|1");
    }
    std::string value(item.substr(eq + 1));
    if (value != "0" && value != "1") {
      throw ConfigError("group value must be 0 or 1 in '" + std::string(item) +
                        "'");
    }
    key.assignments.emplace_back(std::string(item.substr(0, eq)),
                                 value == "1" ? 1 : 0);
    pos = comma + 1;
  }
  if (key.assignments.size() != sensitive.size()) {
    throw ConfigError("group '" + std::string(text) + "' must assign " +
                      std::to_string(sensitive.size()) + " attributes");
  }
  for (std::size_t j = 0; j < sensitive.size(); ++j) {
    if (key.assignments[j].first != sensitive[j]) {
      throw ConfigError("group '" + std::string(text) +
                        "' must list attributes in model order");
    }
  }
  return key;
}

nlohmann::json to_json(const GroupKey& key) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, value] : key.assignments) doc[name] = value;
  return doc;
}

GroupKey group_from_json(const nlohmann::json& doc,
                         std::span<const std::string> sensitive) {
  if (!doc.is_object()) throw ConfigError("group must be a JSON object");
  GroupKey key;
  for (const auto& name : sensitive) {
    if (!doc.contains(name)) {
      throw ConfigError("group is missing attribute '" + name + "'");
    }
    const int value = doc.at(name).get<int>();
    if (value != 0 && value != 1) {
      throw ConfigError("group value for '" + name + "' must be 0 or 1");
    }
    key.assignments.emplace_back(name, value);
  }
  if (doc.size() != sensitive.size()) {
    throw ConfigError("group assigns attributes outside the model");
  }
  return key;
}

}  // namespace cifrank
