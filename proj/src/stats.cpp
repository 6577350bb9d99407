#include "trice/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gsl/gsl_cdf.h>

#include "trice/errors.hpp"

namespace trice {

ChiSquareResult chi_square_gof(const std::vector<double>& expected,
                               const std::vector<double>& observed,
                               double min_expected) {
  if (expected.size() != observed.size())
    throw DomainError("expected and observed bin counts differ in size");
  if (expected.empty()) throw DomainError("no bins");

  std::vector<double> exp_groups, obs_groups;
  double e_acc = 0.0, o_acc = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] < 0.0) throw DomainError("negative expected count");
    e_acc += expected[i];
    o_acc += observed[i];
    if (e_acc >= min_expected) {
      exp_groups.push_back(e_acc);
      obs_groups.push_back(o_acc);
      e_acc = o_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp_groups.empty()) {
      exp_groups.push_back(e_acc);
      obs_groups.push_back(o_acc);
    } else {
      exp_groups.back() += e_acc;
      obs_groups.back() += o_acc;
    }
  }

  ChiSquareResult r;
  r.bins_used = exp_groups.size();
  for (std::size_t i = 0; i < exp_groups.size(); ++i) {
    if (exp_groups[i] <= 0.0) continue;
    const double d = obs_groups[i] - exp_groups[i];
    r.statistic += d * d / exp_groups[i];
  }
  if (exp_groups.size() < 2) {
    r.dof = 0;
    r.p_value = 1.0;
    return r;
  }
  r.dof = exp_groups.size() - 1;
  r.p_value = gsl_cdf_chisq_Q(r.statistic, static_cast<double>(r.dof));
  return r;
}

namespace {

Vec ranks_of(const Vec& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  Vec ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SpearmanResult spearman(const Vec& xs, const Vec& ys) {
  if (xs.size() != ys.size()) throw DomainError("series lengths differ");
  const std::size_t n = xs.size();
  if (n < 3) throw DomainError("spearman needs at least 3 points");
  const Vec rx = ranks_of(xs), ry = ranks_of(ys);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  SpearmanResult r;
  if (sxx == 0.0 || syy == 0.0) return r;  // a constant series: rho = 0
  r.rho = sxy / std::sqrt(sxx * syy);
  const double dof = static_cast<double>(n - 2);
  const double denom = 1.0 - r.rho * r.rho;
  if (denom <= 0.0) {
    r.t_statistic = r.rho > 0.0 ? 1e308 : -1e308;
    r.p_two_sided = 0.0;
    return r;
  }
  r.t_statistic = r.rho * std::sqrt(dof / denom);
  r.p_two_sided = 2.0 * gsl_cdf_tdist_Q(std::fabs(r.t_statistic), dof);
  return r;
}

double least_squares_slope(const Vec& xs, const Vec& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw DomainError("slope needs two same-length series");
  const double mx = mean_of(xs), my = mean_of(ys);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw DomainError("degenerate x series");
  return sxy / sxx;
}

double mean_of(const Vec& xs) {
  if (xs.empty()) throw DomainError("mean of empty series");
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

double variance_of(const Vec& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());
}

double median_of(Vec xs) {
  if (xs.empty()) throw DomainError("median of empty series");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace trice
