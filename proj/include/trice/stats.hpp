#ifndef TRICE_STATS_HPP
#define TRICE_STATS_HPP

#include <cstddef>
#include <vector>

#include "trice/vecmath.hpp"

namespace trice {

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t bins_used = 0;
};

/// Goodness-of-fit test of observed counts against expected counts.
/// Consecutive bins are pooled until each group's expected count reaches
/// min_expected, so sparse enumeration tails do not break the chi-square
/// approximation.
ChiSquareResult chi_square_gof(const std::vector<double>& expected,
                               const std::vector<double>& observed,
                               double min_expected = 5.0);

struct SpearmanResult {
  double rho = 0.0;
  double t_statistic = 0.0;
  double p_two_sided = 1.0;
};

/// Spearman rank correlation with average ranks on ties; the p-value uses
/// the Student-t approximation on n-2 degrees of freedom.
SpearmanResult spearman(const Vec& xs, const Vec& ys);

/// Least-squares slope of ys against xs.
double least_squares_slope(const Vec& xs, const Vec& ys);

double mean_of(const Vec& xs);
double variance_of(const Vec& xs);
double median_of(Vec xs);

}  // namespace trice

#endif  // TRICE_STATS_HPP
