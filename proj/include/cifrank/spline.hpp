#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cifrank {

// Natural cubic spline basis on K strictly increasing knots, K >= 2.
//
// Truncated-power form: N_0 = 1, N_1 = t, N_{j+2} = d_j(t) - d_{K-2}(t) for
// j = 0..K-3, where d_j(t) = ((t - k_j)^3_+ - (t - k_{K-1})^3_+) /
// (k_{K-1} - k_j). Every N is cubic between knots and linear outside
// [k_0, k_{K-1}], so the span is exactly the natural cubic splines with these
// knots and has dimension K. The argument is rescaled to t = (x - k_0) /
// (k_{K-1} - k_0) first; the span is unchanged.
class NaturalCubicBasis {
 public:
  NaturalCubicBasis() = default;
  explicit NaturalCubicBasis(std::vector<double> knots);

  std::size_t size() const { return knots_.size(); }
  const std::vector<double>& knots() const { return knots_; }

  void evaluate(double x, std::span<double> out) const;
  std::vector<double> evaluate(double x) const;

  // K knots at the type-7 sample quantiles j / (K - 1), j = 0..K-1.
  static std::vector<double> quantile_knots(std::span<const double> values,
                                            int count);

 private:
  std::vector<double> knots_;
  std::vector<double> scaled_;
};

}  // namespace cifrank
