#ifndef FSAR_MODEL_MFM_HPP
#define FSAR_MODEL_MFM_HPP

#include "fsar/core/attention.hpp"

#include <random>
#include <string>

namespace fsar::model {

/// Stage switches of the feature-enhancement module.
struct MfmFlags {
  bool st_sa = true;  // spatial + temporal self-attention
  bool v_ca = true;   // visual-lead cross-attention
  bool t_ca = true;   // textual-lead cross-attention
};

/// Downsampling projection plus the four attention blocks.
template <typename Scalar>
struct MfmParams {
  Mat<Scalar> down_w;  // D x D'
  Mat<Scalar> down_b;  // 1 x D'
  AttentionParams<Scalar> spatial;
  AttentionParams<Scalar> temporal;
  AttentionParams<Scalar> visual_cross;
  AttentionParams<Scalar> textual_cross;

  [[nodiscard]] Eigen::Index in_dim() const { return down_w.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return down_w.cols(); }

  template <typename Rng>
  static MfmParams random(Eigen::Index in_dim, Eigen::Index dim, int heads, Rng& rng) {
    MfmParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    p.down_w.resize(in_dim, dim);
    p.down_b.resize(1, dim);
    for (Eigen::Index i = 0; i < p.down_w.size(); ++i) p.down_w.data()[i] = static_cast<Scalar>(u(rng));
    for (Eigen::Index i = 0; i < p.down_b.size(); ++i) p.down_b.data()[i] = static_cast<Scalar>(u(rng));
    p.spatial = AttentionParams<Scalar>::random(dim, heads, rng);
    p.temporal = AttentionParams<Scalar>::random(dim, heads, rng);
    p.visual_cross = AttentionParams<Scalar>::random(dim, heads, rng);
    p.textual_cross = AttentionParams<Scalar>::random(dim, heads, rng);
    return p;
  }

  /// Random attention, identity downsampling (D' = D, zero bias).
  template <typename Rng>
  static MfmParams identity_downsample(Eigen::Index dim, int heads, Rng& rng) {
    MfmParams p = random(dim, dim, heads, rng);
    p.down_w = Mat<Scalar>::Identity(dim, dim);
    p.down_b = Mat<Scalar>::Zero(1, dim);
    return p;
  }

  /// Zeroes every attention output projection so only residual paths remain.
  void zero_attention_outputs() {
    for (auto* a : {&spatial, &temporal, &visual_cross, &textual_cross}) {
      a->wo.setZero();
      a->bo.setZero();
    }
  }

  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("down.w"), self.down_w);
    f(std::string("down.b"), self.down_b);
    self.spatial.for_each("spatial", f);
    self.temporal.for_each("temporal", f);
    self.visual_cross.for_each("visual_cross", f);
    self.textual_cross.for_each("textual_cross", f);
  }
};

/// Scalar parameter count of the module: projection plus four attention blocks.
template <typename Scalar>
std::size_t count_params(const MfmParams<Scalar>& p) {
  return static_cast<std::size_t>(p.down_w.size() + p.down_b.size()) + p.spatial.count() + p.temporal.count() +
         p.visual_cross.count() + p.textual_cross.count();
}

/// Closed-form count for a (D, D') configuration; head count does not change it.
inline std::size_t count_params(std::size_t in_dim, std::size_t dim) {
  return in_dim * dim + dim + 4 * 4 * (dim * dim + dim);
}

template <typename Scalar>
struct MfmVars {
  ad::Var<Scalar> down_w, down_b;
  AttentionVars<Scalar> spatial, temporal, visual_cross, textual_cross;
};

template <typename Scalar>
MfmVars<Scalar> bind(ad::Tape<Scalar>& tape, const MfmParams<Scalar>& p, bool trainable) {
  auto leaf = [&](const Mat<Scalar>& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  return {leaf(p.down_w),
          leaf(p.down_b),
          fsar::bind(tape, p.spatial, trainable),
          fsar::bind(tape, p.temporal, trainable),
          fsar::bind(tape, p.visual_cross, trainable),
          fsar::bind(tape, p.textual_cross, trainable)};
}

/// Per-token affine projection L x D -> L x D'.
template <typename Scalar>
ad::Var<Scalar> downsample(const ad::Var<Scalar>& tokens, const MfmVars<Scalar>& w) {
  if (tokens.cols() != w.down_w.rows()) {
    throw ShapeError("downsample: token width " + std::to_string(tokens.cols()) + " but projection expects " +
                     std::to_string(w.down_w.rows()));
  }
  return ad::add_row(ad::matmul(tokens, w.down_w), w.down_b);
}

template <typename Scalar>
struct VisualFeatures {
  ad::Var<Scalar> features;      // F_v, T x D'
  ad::Var<Scalar> spatiotemporal;  // T_v_spt, T x D'
  bool cross_skipped = false;    // visual-lead cross-attention had no textual keys
};

/// Visual branch: per-frame spatial self-attention + residual, spatial mean,
/// temporal self-attention + residual, then visual-lead cross-attention over
/// the textual tokens + residual. `visual` is (frames * spatial_len) x D',
/// frame-major; `textual` may have zero rows.
template <typename Scalar>
VisualFeatures<Scalar> enhance_visual(const ad::Var<Scalar>& visual, int frames, int spatial_len,
                                      const ad::Var<Scalar>& textual, const MfmVars<Scalar>& w,
                                      const MfmFlags& flags) {
  using namespace ad;
  if (frames < 1 || spatial_len < 1 || visual.rows() != Eigen::Index(frames) * spatial_len) {
    throw ShapeError("enhance_visual: " + std::to_string(visual.rows()) + " rows for " + std::to_string(frames) +
                     " frames x " + std::to_string(spatial_len) + " spatial tokens");
  }
  std::vector<Var<Scalar>> pooled;
  pooled.reserve(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    Var<Scalar> x = slice_rows(visual, Eigen::Index(f) * spatial_len, spatial_len);
    if (flags.st_sa) x = add(attend(x, x, x, w.spatial), x);
    pooled.push_back(mean_rows(x));
  }
  Var<Scalar> spt = vcat(pooled);
  if (flags.st_sa) spt = add(attend(spt, spt, spt, w.temporal), spt);

  VisualFeatures<Scalar> out{spt, spt, false};
  if (flags.v_ca) {
    if (textual.rows() == 0) {
      out.cross_skipped = true;
    } else {
      out.features = add(attend(spt, textual, textual, w.visual_cross), spt);
    }
  }
  return out;
}

/// Textual branch: textual-lead cross-attention over T_v_spt + residual.
template <typename Scalar>
ad::Var<Scalar> enhance_textual(const ad::Var<Scalar>& textual, const ad::Var<Scalar>& spatiotemporal,
                                const MfmVars<Scalar>& w, const MfmFlags& flags) {
  if (!flags.t_ca || textual.rows() == 0) return textual;
  return ad::add(attend(textual, spatiotemporal, spatiotemporal, w.textual_cross), textual);
}

// Value-only conveniences.

template <typename Scalar>
Mat<Scalar> downsample(const Mat<Scalar>& tokens, const MfmParams<Scalar>& p) {
  ad::Tape<Scalar> tape(false);
  return downsample(tape.constant(tokens), bind(tape, p, false)).value();
}

template <typename Scalar>
struct VisualFeatureValues {
  Mat<Scalar> features;
  Mat<Scalar> spatiotemporal;
  bool cross_skipped = false;
};

template <typename Scalar>
VisualFeatureValues<Scalar> enhance_visual(const Mat<Scalar>& visual, int frames, int spatial_len,
                                           const Mat<Scalar>& textual, const MfmParams<Scalar>& p,
                                           const MfmFlags& flags = {}) {
  ad::Tape<Scalar> tape(false);
  const auto w = bind(tape, p, false);
  const auto r = enhance_visual(tape.constant(visual), frames, spatial_len, tape.constant(textual), w, flags);
  return {r.features.value(), r.spatiotemporal.value(), r.cross_skipped};
}

template <typename Scalar>
Mat<Scalar> enhance_textual(const Mat<Scalar>& textual, const Mat<Scalar>& spatiotemporal,
                            const MfmParams<Scalar>& p, const MfmFlags& flags = {}) {
  ad::Tape<Scalar> tape(false);
  const auto w = bind(tape, p, false);
  return enhance_textual(tape.constant(textual), tape.constant(spatiotemporal), w, flags).value();
}

}  // namespace fsar::model

#endif  // FSAR_MODEL_MFM_HPP
