#ifndef FSAR_CORE_ATTENTION_HPP
#define FSAR_CORE_ATTENTION_HPP

#include "fsar/core/ops.hpp"

#include <cmath>
#include <random>
#include <string>

namespace fsar {

/// Weights of one single-layer attention block: Q/K/V/output projections with bias.
template <typename Scalar>
struct AttentionParams {
  Mat<Scalar> wq, wk, wv, wo;  // d x d
  Mat<Scalar> bq, bk, bv, bo;  // 1 x d
  int heads = 1;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F& f) {
    f(prefix + ".wq", self.wq);
    f(prefix + ".bq", self.bq);
    f(prefix + ".wk", self.wk);
    f(prefix + ".bk", self.bk);
    f(prefix + ".wv", self.wv);
    f(prefix + ".bv", self.bv);
    f(prefix + ".wo", self.wo);
    f(prefix + ".bo", self.bo);
  }

 public:
  [[nodiscard]] Eigen::Index dim() const { return wq.rows(); }

  /// Uniform in [-1/sqrt(d), 1/sqrt(d)] for weights and biases.
  template <typename Rng>
  static AttentionParams random(Eigen::Index d, int heads, Rng& rng) {
    if (heads < 1 || d % heads != 0) {
      throw ShapeError("attention: dim " + std::to_string(d) + " not divisible by " +
                       std::to_string(heads) + " heads");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto fill = [&](Eigen::Index r, Eigen::Index c) {
      Mat<Scalar> m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
      return m;
    };
    AttentionParams p;
    p.wq = fill(d, d);
    p.wk = fill(d, d);
    p.wv = fill(d, d);
    p.wo = fill(d, d);
    p.bq = fill(1, d);
    p.bk = fill(1, d);
    p.bv = fill(1, d);
    p.bo = fill(1, d);
    p.heads = heads;
    return p;
  }

  static AttentionParams identity(Eigen::Index d, int heads = 1) {
    AttentionParams p;
    p.wq = p.wk = p.wv = p.wo = Mat<Scalar>::Identity(d, d);
    p.bq = p.bk = p.bv = p.bo = Mat<Scalar>::Zero(1, d);
    p.heads = heads;
    return p;
  }

  /// Visits (name, tensor) for every trainable tensor in a fixed order.
  template <typename F>
  void for_each(const std::string& prefix, F&& f) { visit(*this, prefix, f); }
  template <typename F>
  void for_each(const std::string& prefix, F&& f) const { visit(*this, prefix, f); }

  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(4 * (wq.size() + bq.size()));
  }
};

/// AttentionParams bound onto a tape.
template <typename Scalar>
struct AttentionVars {
  ad::Var<Scalar> wq, wk, wv, wo, bq, bk, bv, bo;
  int heads = 1;
};

template <typename Scalar>
AttentionVars<Scalar> bind(ad::Tape<Scalar>& tape, const AttentionParams<Scalar>& p, bool trainable) {
  auto leaf = [&](const Mat<Scalar>& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  return {leaf(p.wq), leaf(p.wk), leaf(p.wv), leaf(p.wo),
          leaf(p.bq), leaf(p.bk), leaf(p.bv), leaf(p.bo), p.heads};
}

/// softmax(Q K^T / sqrt(d_head)) V per head, concatenated and output-projected.
/// Q = q W_q + b_q, K = k W_k + b_k, V = v W_v + b_v. No residual is added here.
template <typename Scalar>
ad::Var<Scalar> attend(const ad::Var<Scalar>& q, const ad::Var<Scalar>& k, const ad::Var<Scalar>& v,
                       const AttentionVars<Scalar>& w) {
  using namespace ad;
  if (k.rows() == 0) throw DomainError("attention: no keys");
  if (k.rows() != v.rows()) throw ShapeError("attention: key/value row mismatch");
  const Var<Scalar> qp = add_row(matmul(q, w.wq), w.bq);
  const Var<Scalar> kp = add_row(matmul(k, w.wk), w.bk);
  const Var<Scalar> vp = add_row(matmul(v, w.wv), w.bv);
  const Eigen::Index d = qp.cols();
  const Eigen::Index dh = d / w.heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  Var<Scalar> mixed;
  if (w.heads == 1) {
    mixed = matmul(softmax_rows(scale(matmul_nt(qp, kp), inv_sqrt)), vp);
  } else {
    std::vector<Var<Scalar>> outs;
    for (int h = 0; h < w.heads; ++h) {
      const auto qh = slice_cols(qp, h * dh, dh);
      const auto kh = slice_cols(kp, h * dh, dh);
      const auto vh = slice_cols(vp, h * dh, dh);
      outs.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt)), vh));
    }
    mixed = hcat(outs);
  }
  return add_row(matmul(mixed, w.wo), w.bo);
}

/// Value-only attention, for callers outside a training step.
template <typename Scalar>
Mat<Scalar> scaled_dot_attention(const Mat<Scalar>& q, const Mat<Scalar>& k, const Mat<Scalar>& v,
                                 const AttentionParams<Scalar>& p) {
  ad::Tape<Scalar> tape(false);
  const auto w = bind(tape, p, false);
  return attend(tape.constant(q), tape.constant(k), tape.constant(v), w).value();
}

}  // namespace fsar

#endif  // FSAR_CORE_ATTENTION_HPP
