#ifndef FSAR_MODEL_HEAD_HPP
#define FSAR_MODEL_HEAD_HPP

#include "fsar/model/mfm.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace fsar::model {

/// Every trainable tensor of the head: the enhancement module plus the
/// prototype mixing weight.
template <typename Scalar>
struct HeadParams {
  MfmParams<Scalar> mfm;
  Mat<Scalar> alpha = Mat<Scalar>::Constant(1, 1, Scalar(0.1));

  template <typename F>
  void for_each(F&& f) {
    mfm.for_each(f);
    f(std::string("alpha"), alpha);
  }

  template <typename F>
  void for_each(F&& f) const {
    mfm.for_each(f);
    f(std::string("alpha"), alpha);
  }

  [[nodiscard]] double alpha_value() const { return static_cast<double>(alpha(0, 0)); }

  /// Clamps the mixing weight into [0, 1].
  void clamp_alpha() { alpha(0, 0) = std::clamp(alpha(0, 0), Scalar(0), Scalar(1)); }

  bool operator==(const HeadParams& o) const {
    std::vector<const Mat<Scalar>*> mine, theirs;
    for_each([&](const std::string&, const Mat<Scalar>& m) { mine.push_back(&m); });
    o.for_each([&](const std::string&, const Mat<Scalar>& m) { theirs.push_back(&m); });
    if (mine.size() != theirs.size()) return false;
    for (std::size_t k = 0; k < mine.size(); ++k) {
      if (mine[k]->rows() != theirs[k]->rows() || mine[k]->cols() != theirs[k]->cols()) return false;
      if (*mine[k] != *theirs[k]) return false;
    }
    return true;
  }
};

/// Scalar parameters of the head, mixing weight included.
template <typename Scalar>
std::size_t count_params(const HeadParams<Scalar>& p) {
  return count_params(p.mfm) + 1;
}

/// Closed-form head count for a (D, D') configuration.
inline std::size_t count_head_params(std::size_t in_dim, std::size_t dim) { return count_params(in_dim, dim) + 1; }

}  // namespace fsar::model

#endif  // FSAR_MODEL_HEAD_HPP
