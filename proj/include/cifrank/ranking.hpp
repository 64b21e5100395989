#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cifrank/dataset.hpp"

namespace cifrank {

enum class Direction { kDescending, kAscending };

std::string_view to_string(Direction direction);
Direction parse_direction(std::string_view text);

// A permutation of dataset rows (or a prefix of one, for quota rankings).
struct Ranking {
  std::vector<std::size_t> order;
  std::string score_column;
  Direction direction = Direction::kDescending;
  std::uint64_t tie_break_seed = 0;

  std::size_t size() const { return order.size(); }
};

// Sorts by score; each block of equal scores is Fisher-Yates shuffled with a
// generator seeded by `seed`, so ties are uniformly permuted and the output
// is a pure function of (scores, direction, seed).
Ranking rank_scores(std::span<const double> scores, Direction direction,
                    std::uint64_t seed, std::string score_column = {});

Ranking rank_by_score(const Dataset& data, std::string_view score_column,
                      Direction direction, std::uint64_t seed);

// Proportional representation on one binary attribute: each group gets its
// largest-remainder share of k and contributes its own top members; the
// selection is then merged in score order. Returns a prefix of length k.
Ranking quota_ranking(const Dataset& data, std::string_view score_column,
                      std::string_view quota_attribute, std::size_t k,
                      Direction direction, std::uint64_t seed);

// Largest-remainder apportionment of k seats over the given group sizes.
// Remainder ties go to the earlier group.
std::vector<std::size_t> apportion(std::span<const std::size_t> group_sizes,
                                   std::size_t k);

std::set<std::size_t> top_k(const Ranking& ranking, std::size_t k);

// rank,id,group,observed_score,ranking_score
void write_ranking_csv(std::ostream& out, const Ranking& ranking,
                       const Dataset& observed, std::string_view observed_column,
                       std::span<const double> ranking_scores,
                       std::span<const std::string> sensitive);

// Reads the id column of a ranking CSV, in rank order, and maps ids to rows
// of `data`.
Ranking read_ranking_csv(std::istream& in, const Dataset& data);

}  // namespace cifrank
