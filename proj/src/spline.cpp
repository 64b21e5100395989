#include "cifrank/spline.hpp"

#include <algorithm>
#include <cmath>

#include "cifrank/error.hpp"

namespace cifrank {

namespace {

double cube_plus(double v) { return v > 0.0 ? v * v * v : 0.0; }

}  // namespace

NaturalCubicBasis::NaturalCubicBasis(std::vector<double> knots)
    : knots_(std::move(knots)) {
  if (knots_.size() < 2) {
    throw ConfigError("natural cubic spline needs at least 2 knots");
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1])) {
      throw DataError("spline knots must be strictly increasing");
    }
  }
  const double lo = knots_.front();
  const double span = knots_.back() - lo;
  scaled_.reserve(knots_.size());
  for (double k : knots_) scaled_.push_back((k - lo) / span);
  scaled_.back() = 1.0;
}

void NaturalCubicBasis::evaluate(double x, std::span<double> out) const {
  const std::size_t count = knots_.size();
  const double t = (x - knots_.front()) / (knots_.back() - knots_.front());
  out[0] = 1.0;
  out[1] = t;
  if (count == 2) return;
  const double last = scaled_[count - 1];
  const double tail = cube_plus(t - last);
  auto d = [&](std::size_t j) {
    return (cube_plus(t - scaled_[j]) - tail) / (last - scaled_[j]);
  };
  const double d_ref = d(count - 2);
  for (std::size_t j = 0; j + 2 < count; ++j) out[j + 2] = d(j) - d_ref;
}

std::vector<double> NaturalCubicBasis::evaluate(double x) const {
  std::vector<double> out(size());
  evaluate(x, out);
  return out;
}

std::vector<double> NaturalCubicBasis::quantile_knots(
    std::span<const double> values, int count) {
  if (count < 2) throw ConfigError("knot count must be at least 2");
  if (values.empty()) throw DataError("cannot place knots on no data");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n1 = static_cast<double>(sorted.size() - 1);
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    const double h = n1 * j / (count - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    knots.push_back(sorted[lo] + (h - static_cast<double>(lo)) *
                                     (sorted[hi] - sorted[lo]));
  }
  knots.front() = sorted.front();
  knots.back() = sorted.back();
  return knots;
}

}  // namespace cifrank
