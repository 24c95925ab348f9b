#ifndef FSAR_CORE_GRADCHECK_HPP
#define FSAR_CORE_GRADCHECK_HPP

#include "fsar/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace fsar {

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  /// False when any evaluation of f was NaN/Inf; max_rel_error is then +inf.
  bool finite = true;

  [[nodiscard]] bool passed(double tol) const { return finite && max_rel_error < tol; }
};

/// Compares `analytic` against central differences of `f` at `point`.
/// Error per coordinate is |a - c| / max(1, |a|, |c|).
template <typename Scalar>
GradCheckResult finite_diff_check(const std::function<Scalar(const ColVec<Scalar>&)>& f,
                                  const ColVec<Scalar>& point, const ColVec<Scalar>& analytic,
                                  Scalar step) {
  if (!(step > 0)) throw DomainError("finite_diff_check: step must be positive");
  if (point.size() != analytic.size()) throw ShapeError("finite_diff_check: gradient size mismatch");
  GradCheckResult res;
  ColVec<Scalar> x = point;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar orig = x(i);
    x(i) = orig + step;
    const Scalar fp = f(x);
    x(i) = orig - step;
    const Scalar fm = f(x);
    x(i) = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)) ||
        !std::isfinite(static_cast<double>(analytic(i)))) {
      res.finite = false;
      res.max_rel_error = std::numeric_limits<double>::infinity();
      res.worst_index = i;
      return res;
    }
    const double central = static_cast<double>((fp - fm) / (Scalar(2) * step));
    const double a = static_cast<double>(analytic(i));
    const double err = std::abs(a - central) / std::max({1.0, std::abs(a), std::abs(central)});
    if (err > res.max_rel_error || res.worst_index < 0) {
      res.max_rel_error = std::max(res.max_rel_error, err);
      if (err >= res.max_rel_error) res.worst_index = i;
    }
  }
  return res;
}

}  // namespace fsar

#endif  // FSAR_CORE_GRADCHECK_HPP
