#ifndef FSAR_MODEL_CTPCM_HPP
#define FSAR_MODEL_CTPCM_HPP

#include "fsar/core/ops.hpp"

#include <string>
#include <utility>
#include <vector>

namespace fsar::model {

struct CtpcmFlags {
  bool lpc = true;  // local (token-level) refinement
  bool gpc = true;  // global (video-level) refinement
};

enum class AlphaMode { fixed, learnable, adaptive };

std::string to_string(AlphaMode m);
AlphaMode parse_alpha_mode(const std::string& s);

inline constexpr double kAlphaLow = 0.1;
inline constexpr double kAlphaHigh = 0.9;
inline constexpr int kGateTextLen = 8;

/// Element-wise mean over shots. Textual shots must be padded to one length first.
template <typename Scalar>
ad::Var<Scalar> init_prototype(const std::vector<ad::Var<Scalar>>& shots) {
  if (shots.empty()) throw DomainError("init_prototype: no support shots");
  ad::Var<Scalar> acc = shots.front();
  for (std::size_t k = 1; k < shots.size(); ++k) acc = ad::add(acc, shots[k]);
  if (shots.size() == 1) return acc;
  return ad::scale(acc, Scalar(1) / static_cast<Scalar>(shots.size()));
}

/// Zero rows appended to the shorter of the two.
template <typename Scalar>
std::pair<Mat<Scalar>, Mat<Scalar>> pad_textual(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  const Eigen::Index len = std::max(a.rows(), b.rows());
  auto grow = [len](const Mat<Scalar>& m) {
    if (m.rows() == len) return m;
    Mat<Scalar> out = Mat<Scalar>::Zero(len, m.cols());
    out.topRows(m.rows()) = m;
    return out;
  };
  return {grow(a), grow(b)};
}

template <typename Scalar>
struct Refinement {
  ad::Var<Scalar> prototype;  // L x D'
  ad::Var<Scalar> weights;    // softmax weights: L x B_Q (local) or 1 x B_Q (global)
};

namespace detail {
template <typename Scalar>
void check_queries(const ad::Var<Scalar>& p, const std::vector<ad::Var<Scalar>>& queries, const char* op) {
  if (queries.empty()) throw DomainError(std::string(op) + ": no query features");
  for (const auto& q : queries) {
    if (q.rows() != p.rows() || q.cols() != p.cols()) {
      throw ShapeError(std::string(op) + ": query " + shape_str(q.rows(), q.cols()) + " vs prototype " +
                       shape_str(p.rows(), p.cols()));
    }
  }
}
}  // namespace detail

/// Token-level refinement: per position, softmax over queries of the cosine
/// between prototype and query tokens, then the weighted sum of query tokens.
template <typename Scalar>
Refinement<Scalar> local_prototype(const ad::Var<Scalar>& p, const std::vector<ad::Var<Scalar>>& queries) {
  using namespace ad;
  detail::check_queries(p, queries, "local_prototype");
  const Var<Scalar> pn = normalize_rows(p);
  std::vector<Var<Scalar>> sims;
  sims.reserve(queries.size());
  for (const auto& q : queries) sims.push_back(rowwise_dot(pn, normalize_rows(q)));
  const Var<Scalar> w = softmax_rows(hcat(sims));
  Var<Scalar> out = scale_rows(queries.front(), slice_cols(w, 0, 1));
  for (std::size_t g = 1; g < queries.size(); ++g)
    out = add(out, scale_rows(queries[g], slice_cols(w, static_cast<Eigen::Index>(g), 1)));
  return {out, w};
}

/// Video-level refinement over token means; result is 1 x D'.
template <typename Scalar>
Refinement<Scalar> global_prototype(const ad::Var<Scalar>& p, const std::vector<ad::Var<Scalar>>& queries) {
  using namespace ad;
  detail::check_queries(p, queries, "global_prototype");
  std::vector<Var<Scalar>> means;
  means.reserve(queries.size());
  for (const auto& q : queries) means.push_back(mean_rows(q));
  const Var<Scalar> qm = vcat(means);
  const Var<Scalar> w = softmax_rows(matmul_nt(normalize_rows(mean_rows(p)), normalize_rows(qm)));
  return {matmul(w, qm), w};
}

/// (P + alpha * P_loc + (1 - alpha) * P_glb) / 2 with P_glb broadcast over tokens.
/// `alpha` is a 1 x 1 node.
template <typename Scalar>
ad::Var<Scalar> combine(const ad::Var<Scalar>& p, const ad::Var<Scalar>& p_loc, const ad::Var<Scalar>& p_glb,
                        const ad::Var<Scalar>& alpha) {
  using namespace ad;
  const Var<Scalar> mix = add_row(scale_by(p_loc, alpha), scale_by(p_glb, affine(alpha, Scalar(-1), Scalar(1))));
  return scale(add(p, mix), Scalar(0.5));
}

/// Prototype refinement honouring the component switches.
/// lpc only: (P + P_loc) / 2; gpc only: (P + P_glb) / 2; neither: P.
template <typename Scalar>
ad::Var<Scalar> refine(const ad::Var<Scalar>& p, const std::vector<ad::Var<Scalar>>& queries,
                       const ad::Var<Scalar>& alpha, const CtpcmFlags& flags) {
  using namespace ad;
  if (p.rows() == 0) return p;
  if (flags.lpc && flags.gpc) {
    return combine(p, local_prototype(p, queries).prototype, global_prototype(p, queries).prototype, alpha);
  }
  if (flags.lpc) return scale(add(p, local_prototype(p, queries).prototype), Scalar(0.5));
  if (flags.gpc) return scale(add_row(p, global_prototype(p, queries).prototype), Scalar(0.5));
  return p;
}

/// Bidirectional mean of per-token min distances between two token sets.
template <typename Scalar>
Scalar mean_min_distance(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  const Mat<Scalar> d = fsar::pairwise_distances(a, b);
  return d.rowwise().minCoeff().mean() + d.colwise().minCoeff().mean();
}

/// Truncates or zero-pads a textual token block to `len` rows.
template <typename Scalar>
Mat<Scalar> fit_rows(const Mat<Scalar>& m, Eigen::Index len) {
  Mat<Scalar> out = Mat<Scalar>::Zero(len, m.cols());
  const Eigen::Index keep = std::min(len, m.rows());
  out.topRows(keep) = m.topRows(keep);
  return out;
}

struct GateResult {
  double alpha = kAlphaLow;
  double visual_distance = 0;
  double textual_distance = 0;
  bool textual_missing = false;
};

/// Two-valued gate: 0.1 when the visual branch matches more tightly than the
/// textual branch, else 0.9. Distances average over every (prototype, query)
/// pair; textual tokens are cut or padded to `text_len` first.
template <typename Scalar>
GateResult adaptive_alpha(const std::vector<Mat<Scalar>>& proto_v, const std::vector<Mat<Scalar>>& proto_t,
                          const std::vector<Mat<Scalar>>& query_v, const std::vector<Mat<Scalar>>& query_t,
                          int text_len = kGateTextLen) {
  if (proto_v.empty() || query_v.empty()) throw DomainError("adaptive_alpha: empty episode");
  GateResult r;
  const auto pairs = static_cast<double>(proto_v.size() * query_v.size());
  for (const auto& p : proto_v)
    for (const auto& q : query_v) r.visual_distance += static_cast<double>(mean_min_distance(p, q));
  r.visual_distance /= pairs;

  bool missing = proto_t.size() != proto_v.size() || query_t.size() != query_v.size() || text_len <= 0;
  for (const auto& m : proto_t) missing = missing || m.rows() == 0;
  for (const auto& m : query_t) missing = missing || m.rows() == 0;
  if (missing) {
    r.textual_missing = true;
    r.alpha = kAlphaLow;
    return r;
  }
  for (const auto& p : proto_t) {
    const Mat<Scalar> pf = fit_rows(p, text_len);
    for (const auto& q : query_t) r.textual_distance += static_cast<double>(mean_min_distance(pf, fit_rows(q, text_len)));
  }
  r.textual_distance /= pairs;
  r.alpha = r.visual_distance < r.textual_distance ? kAlphaLow : kAlphaHigh;
  return r;
}

// Value-only conveniences.

template <typename Scalar>
Mat<Scalar> init_prototype(const std::vector<Mat<Scalar>>& shots) {
  ad::Tape<Scalar> tape(false);
  std::vector<ad::Var<Scalar>> v;
  for (const auto& s : shots) v.push_back(tape.constant(s));
  return init_prototype(v).value();
}

template <typename Scalar>
struct RefinementValues {
  Mat<Scalar> prototype;
  Mat<Scalar> weights;
};

template <typename Scalar>
RefinementValues<Scalar> local_prototype(const Mat<Scalar>& p, const std::vector<Mat<Scalar>>& queries) {
  ad::Tape<Scalar> tape(false);
  std::vector<ad::Var<Scalar>> q;
  for (const auto& m : queries) q.push_back(tape.constant(m));
  const auto r = local_prototype(tape.constant(p), q);
  return {r.prototype.value(), r.weights.value()};
}

template <typename Scalar>
RefinementValues<Scalar> global_prototype(const Mat<Scalar>& p, const std::vector<Mat<Scalar>>& queries) {
  ad::Tape<Scalar> tape(false);
  std::vector<ad::Var<Scalar>> q;
  for (const auto& m : queries) q.push_back(tape.constant(m));
  const auto r = global_prototype(tape.constant(p), q);
  return {r.prototype.value(), r.weights.value()};
}

template <typename Scalar>
Mat<Scalar> combine(const Mat<Scalar>& p, const Mat<Scalar>& p_loc, const Mat<Scalar>& p_glb, Scalar alpha) {
  ad::Tape<Scalar> tape(false);
  Mat<Scalar> a(1, 1);
  a(0, 0) = alpha;
  return combine(tape.constant(p), tape.constant(p_loc), tape.constant(p_glb), tape.constant(a)).value();
}

}  // namespace fsar::model

#endif  // FSAR_MODEL_CTPCM_HPP
