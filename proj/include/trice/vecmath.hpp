#ifndef TRICE_VECMATH_HPP
#define TRICE_VECMATH_HPP

#include <cmath>
#include <cstddef>
#include <vector>

namespace trice {

using Vec = std::vector<double>;

inline void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& x, double a) {
  for (double& v : x) v *= a;
}

inline double l2_norm(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Vec& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace trice

#endif  // TRICE_VECMATH_HPP
