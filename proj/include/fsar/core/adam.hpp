#ifndef FSAR_CORE_ADAM_HPP
#define FSAR_CORE_ADAM_HPP

#include "fsar/core/types.hpp"

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace fsar {

/// Piecewise-constant decay: base rate times the product of the multipliers
/// of every milestone already reached.
struct MultiStepSchedule {
  double base_lr = 1e-3;
  std::vector<std::pair<std::int64_t, double>> milestones;

  /// Milestones at 50% and 75% of `total_steps`, x0.1 each.
  static MultiStepSchedule halves(double base_lr, std::int64_t total_steps) {
    MultiStepSchedule s;
    s.base_lr = base_lr;
    if (total_steps > 0) {
      s.milestones = {{total_steps / 2, 0.1}, {(total_steps * 3) / 4, 0.1}};
    }
    return s;
  }

  /// Rate for the update whose 0-based index is `step`.
  [[nodiscard]] double lr_at(std::int64_t step) const {
    double lr = base_lr;
    for (const auto& [at, mult] : milestones)
      if (step >= at) lr *= mult;
    return lr;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  MultiStepSchedule schedule;
  std::vector<Mat<Scalar>> m;
  std::vector<Mat<Scalar>> v;
  std::int64_t step = 0;

  [[nodiscard]] double effective_lr() const { return schedule.lr_at(step); }
};

/// One bias-corrected Adam update over a list of parameter tensors.
///
/// Moments are created lazily on the first call. A tensor whose gradient is
/// identically zero is left untouched (parameter and moments), so a step with
/// all-zero gradients is the identity on parameters whatever the state.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, const std::vector<Mat<Scalar>*>& params,
               const std::vector<Mat<Scalar>>& grads) {
  if (params.size() != grads.size()) throw DomainError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Mat<Scalar>::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw DomainError("adam_step: parameter list changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        state.m[i].rows() != grads[i].rows() || state.m[i].cols() != grads[i].cols()) {
      throw DomainError("adam_step: shape mismatch at tensor " + std::to_string(i) + " " +
                        shape_str(params[i]->rows(), params[i]->cols()) + " vs grad " +
                        shape_str(grads[i].rows(), grads[i].cols()));
    }
  }

  const double lr = state.effective_lr();
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat<Scalar>& g = grads[i];
    if (g.size() == 0 || g.isZero(0)) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = Scalar(c.beta1) * m + Scalar(1 - c.beta1) * g;
    v = Scalar(c.beta2) * v + Scalar(1 - c.beta2) * g.cwiseAbs2();
    const auto m_hat = (m.array() / Scalar(bc1));
    const auto v_hat = (v.array() / Scalar(bc2));
    params[i]->array() -= Scalar(lr) * m_hat / (v_hat.sqrt() + Scalar(c.eps));
  }
}

}  // namespace fsar

#endif  // FSAR_CORE_ADAM_HPP
