#include "cifrank/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "cifrank/error.hpp"
#include "cifrank/random.hpp"

namespace cifrank {

namespace {
__extension__ using Wide = unsigned __int128;
}  // namespace

std::string_view to_string(Direction direction) {
  return direction == Direction::kDescending ? "descending" : "ascending";
}

Direction parse_direction(std::string_view text) {
  if (text == "descending" || text == "desc") return Direction::kDescending;
  if (text == "ascending" || text == "asc") return Direction::kAscending;
  throw ConfigError("unknown ranking direction '" + std::string(text) + "'");
}

Ranking rank_scores(std::span<const double> scores, Direction direction,
                    std::uint64_t seed, std::string score_column) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw DataError("score for row " + std::to_string(i) + " is not numeric");
    }
  }
  Ranking ranking;
  ranking.score_column = std::move(score_column);
  ranking.direction = direction;
  ranking.tie_break_seed = seed;
  ranking.order.resize(scores.size());
  std::iota(ranking.order.begin(), ranking.order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    return direction == Direction::kDescending ? scores[a] > scores[b]
                                               : scores[a] < scores[b];
  };
  std::stable_sort(ranking.order.begin(), ranking.order.end(), better);

  Rng rng(seed);
  auto& order = ranking.order;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      ++end;
    }
    for (std::size_t i = end - start; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(order[start + i - 1], order[start + j]);
    }
    start = end;
  }
  return ranking;
}

Ranking rank_by_score(const Dataset& data, std::string_view score_column,
                      Direction direction, std::uint64_t seed) {
  return rank_scores(data.column(score_column), direction, seed,
                     std::string(score_column));
}

std::vector<std::size_t> apportion(std::span<const std::size_t> group_sizes,
                                   std::size_t k) {
  const std::size_t n =
      std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
  if (n == 0) throw DataError("cannot apportion over empty groups");
  if (k > n) throw DataError("k exceeds the number of records");
  std::vector<std::size_t> seats(group_sizes.size());
  std::vector<std::size_t> remainder(group_sizes.size());
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < group_sizes.size(); ++g) {
    // Exact integer arithmetic: k * n_g / n.
    const auto product = static_cast<Wide>(k) * group_sizes[g];
    seats[g] = static_cast<std::size_t>(product / n);
    remainder[g] = static_cast<std::size_t>(product % n);
    assigned += seats[g];
  }
  std::vector<std::size_t> by_remainder(group_sizes.size());
  std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) {
                     return remainder[a] > remainder[b];
                   });
  for (std::size_t i = 0; assigned < k; ++i, ++assigned) {
    ++seats[by_remainder[i]];
  }
  return seats;
}

Ranking quota_ranking(const Dataset& data, std::string_view score_column,
                      std::string_view quota_attribute, std::size_t k,
                      Direction direction, std::uint64_t seed) {
  const ColumnSpec& attr = data.schema().at(quota_attribute);
  if (attr.kind != ValueKind::kBinary) {
    throw DataError("quota attribute '" + attr.name + "' is not binary");
  }
  if (k > data.size()) throw DataError("k exceeds the number of records");
  const std::vector<std::string> names{attr.name};
  const auto partition = group_partition(data, names);
  std::vector<std::size_t> sizes;
  for (const auto& [key, rows] : partition) sizes.push_back(rows.size());
  const auto seats = apportion(sizes, k);

  const Ranking full = rank_by_score(data, score_column, direction, seed);
  const auto groups = data.column(attr.name);
  std::vector<std::size_t> taken(2, 0);
  std::vector<std::size_t> quota(2, 0);
  std::size_t slot = 0;
  for (const auto& [key, rows] : partition) {
    quota[static_cast<std::size_t>(key.assignments.front().second)] =
        seats[slot++];
  }

  // Walking the full ranking and keeping each group's first quota members
  // yields every group's top members merged in score order.
  Ranking prefix;
  prefix.score_column = full.score_column;
  prefix.direction = direction;
  prefix.tie_break_seed = seed;
  for (std::size_t row : full.order) {
    const auto g = static_cast<std::size_t>(groups[row] != 0.0);
    if (taken[g] < quota[g]) {
      ++taken[g];
      prefix.order.push_back(row);
      if (prefix.order.size() == k) break;
    }
  }
  return prefix;
}

std::set<std::size_t> top_k(const Ranking& ranking, std::size_t k) {
  if (k == 0 || k > ranking.size()) {
    throw ConfigError("k=" + std::to_string(k) + " is outside [1, " +
                      std::to_string(ranking.size()) + "]");
  }
  return {ranking.order.begin(),
          ranking.order.begin() + static_cast<std::ptrdiff_t>(k)};
}

void write_ranking_csv(std::ostream& out, const Ranking& ranking,
                       const Dataset& observed, std::string_view observed_column,
                       std::span<const double> ranking_scores,
                       std::span<const std::string> sensitive) {
  const auto scores = observed.column(observed_column);
  const GroupIndex groups = GroupIndex::build(observed, sensitive);
  out << "rank,id,group,observed_score,ranking_score\n";
  for (std::size_t i = 0; i < ranking.order.size(); ++i) {
    const std::size_t row = ranking.order[i];
    out << (i + 1) << ',' << observed.id(row) << ",\""
        << groups.keys[groups.group_of[row]].label() << "\","
        << format_double(scores[row]) << ','
        << format_double(ranking_scores[row]) << '\n';
  }
}

Ranking read_ranking_csv(std::istream& in, const Dataset& data) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("ranking CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  // Only the group cell is quoted, and it follows the id cell.
  std::size_t id_cell = std::string::npos;
  {
    std::size_t cell = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) comma = line.size();
      if (line.substr(start, comma - start) == "id") id_cell = cell;
      ++cell;
      start = comma + 1;
    }
  }
  if (id_cell == std::string::npos) {
    throw DataError("ranking CSV has no 'id' column");
  }
  Ranking ranking;
  std::vector<bool> seen(data.size(), false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t start = 0;
    for (std::size_t c = 0; c < id_cell; ++c) {
      start = line.find(',', start);
      if (start == std::string::npos) {
        throw DataError("ranking CSV line " + std::to_string(line_no) +
                        " is short");
      }
      ++start;
    }
    const std::size_t end = line.find(',', start);
    const std::string id = line.substr(start, end - start);
    const auto row = data.row_of(id);
    if (!row) {
      throw DataError("ranking CSV line " + std::to_string(line_no) +
                      ": unknown id '" + id + "'");
    }
    if (seen[*row]) throw DataError("ranking CSV repeats id '" + id + "'");
    seen[*row] = true;
    ranking.order.push_back(*row);
  }
  return ranking;
}

}  // namespace cifrank
