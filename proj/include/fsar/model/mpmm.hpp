#ifndef FSAR_MODEL_MPMM_HPP
#define FSAR_MODEL_MPMM_HPP

#include "fsar/core/ops.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace fsar::model {

enum class Metric { mpmm, bimhm, hausdorff, avg, dec_avg };
enum class Branch { visual, textual, both };

std::string to_string(Metric m);
std::string to_string(Branch b);
Metric parse_metric(const std::string& s);
Branch parse_branch(const std::string& s);

/// Token sets of one video (or prototype) split by branch. An empty branch
/// (zero rows) takes no part in matching.
template <typename Scalar>
struct BranchTokens {
  ad::Var<Scalar> visual;
  ad::Var<Scalar> textual;
};

template <typename Scalar>
struct PairDistances {
  ad::Var<Scalar> support;  // d_s, k x 1
  ad::Var<Scalar> query;    // d_q, k x 1
};

namespace detail {

using Index = Eigen::Index;
using Picks = std::vector<std::pair<Index, Index>>;

/// Positions of the row-wise minima of `d` (first minimum on ties).
template <typename Scalar>
Picks row_argmins(const Mat<Scalar>& d) {
  Picks out;
  out.reserve(static_cast<std::size_t>(d.rows()));
  for (Index i = 0; i < d.rows(); ++i) {
    Index j = 0;
    d.row(i).minCoeff(&j);
    out.emplace_back(i, j);
  }
  return out;
}

template <typename Scalar>
Picks col_argmins(const Mat<Scalar>& d) {
  Picks out;
  out.reserve(static_cast<std::size_t>(d.cols()));
  for (Index j = 0; j < d.cols(); ++j) {
    Index i = 0;
    d.col(j).minCoeff(&i);
    out.emplace_back(i, j);
  }
  return out;
}

/// Indices of the `u` largest entries of a column, stable on ties.
template <typename Scalar>
Picks top_entries(const Mat<Scalar>& col, Index u) {
  std::vector<Index> order(static_cast<std::size_t>(col.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return col(a, 0) > col(b, 0); });
  order.resize(static_cast<std::size_t>(std::min(u, col.rows())));
  Picks out;
  for (Index i : order) out.emplace_back(i, 0);
  return out;
}

template <typename Scalar>
void check_width(const ad::Var<Scalar>& a, const ad::Var<Scalar>& b, const char* op) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": feature width mismatch");
  }
}

}  // namespace detail

/// Per-token minimum Euclidean distances, visual entries first then textual.
/// A branch counts only when it is non-empty on both sides.
template <typename Scalar>
PairDistances<Scalar> token_min_distances(const BranchTokens<Scalar>& s, const BranchTokens<Scalar>& q) {
  using namespace ad;
  std::vector<Var<Scalar>> ds, dq;
  for (auto [a, b] : {std::pair{s.visual, q.visual}, std::pair{s.textual, q.textual}}) {
    if (!a.valid() || !b.valid() || a.rows() == 0 || b.rows() == 0) continue;
    detail::check_width(a, b, "token_min_distances");
    const Var<Scalar> d = pairwise_distances(a, b);
    ds.push_back(gather(d, detail::row_argmins(d.value())));
    dq.push_back(gather(d, detail::col_argmins(d.value())));
  }
  if (ds.empty()) throw DomainError("token_min_distances: no branch is populated on both sides");
  return {vcat(ds), vcat(dq)};
}

/// Sum of the u largest support-side and u largest query-side entries, over u.
/// u is clamped per side; the divisor stays u.
template <typename Scalar>
ad::Var<Scalar> mpmm_distance(const PairDistances<Scalar>& pd, int u) {
  using namespace ad;
  if (u < 1) throw DomainError("mpmm_distance: u must be >= 1");
  if (pd.support.rows() == 0 || pd.query.rows() == 0) throw DomainError("mpmm_distance: empty distance vector");
  const Var<Scalar> top_s = gather(pd.support, detail::top_entries(pd.support.value(), u));
  const Var<Scalar> top_q = gather(pd.query, detail::top_entries(pd.query.value(), u));
  return scale(add(sum_all(top_s), sum_all(top_q)), Scalar(1) / static_cast<Scalar>(u));
}

/// Per branch: mean support-side min plus mean query-side min; summed over branches.
template <typename Scalar>
ad::Var<Scalar> bimhm_distance(const BranchTokens<Scalar>& s, const BranchTokens<Scalar>& q) {
  using namespace ad;
  std::vector<Var<Scalar>> parts;
  for (auto [a, b] : {std::pair{s.visual, q.visual}, std::pair{s.textual, q.textual}}) {
    if (!a.valid() || !b.valid() || a.rows() == 0 || b.rows() == 0) continue;
    detail::check_width(a, b, "bimhm_distance");
    const Var<Scalar> d = pairwise_distances(a, b);
    parts.push_back(mean_rows(gather(d, detail::row_argmins(d.value()))));
    parts.push_back(mean_rows(gather(d, detail::col_argmins(d.value()))));
  }
  if (parts.empty()) throw DomainError("bimhm_distance: both branches empty");
  return sum_all(vcat(parts));
}

/// Per branch: symmetric max-of-min; summed over branches.
template <typename Scalar>
ad::Var<Scalar> hausdorff_distance(const BranchTokens<Scalar>& s, const BranchTokens<Scalar>& q) {
  using namespace ad;
  std::vector<Var<Scalar>> parts;
  for (auto [a, b] : {std::pair{s.visual, q.visual}, std::pair{s.textual, q.textual}}) {
    if (!a.valid() || !b.valid() || a.rows() == 0 || b.rows() == 0) continue;
    detail::check_width(a, b, "hausdorff_distance");
    const Var<Scalar> d = pairwise_distances(a, b);
    const Mat<Scalar> dv = d.value();
    const auto rows = detail::row_argmins(dv);
    const auto cols = detail::col_argmins(dv);
    // Directed maxima; the larger one wins (support side on ties).
    std::size_t rs = 0, cs = 0;
    for (std::size_t k = 1; k < rows.size(); ++k)
      if (dv(rows[k].first, rows[k].second) > dv(rows[rs].first, rows[rs].second)) rs = k;
    for (std::size_t k = 1; k < cols.size(); ++k)
      if (dv(cols[k].first, cols[k].second) > dv(cols[cs].first, cols[cs].second)) cs = k;
    const auto pick = dv(rows[rs].first, rows[rs].second) >= dv(cols[cs].first, cols[cs].second) ? rows[rs] : cols[cs];
    parts.push_back(gather(d, {pick}));
  }
  if (parts.empty()) throw DomainError("hausdorff_distance: both branches empty");
  return sum_all(vcat(parts));
}

/// Cosine of token means. Zero-norm means score 0.
template <typename Scalar>
ad::Var<Scalar> mean_cosine(const ad::Var<Scalar>& a, const ad::Var<Scalar>& b) {
  using namespace ad;
  return rowwise_dot(normalize_rows(mean_rows(a)), normalize_rows(mean_rows(b)));
}

/// Dec-Avg similarity: sum over populated branches of the cosine of branch means.
template <typename Scalar>
ad::Var<Scalar> decoupled_cosine_score(const BranchTokens<Scalar>& s, const BranchTokens<Scalar>& q) {
  std::vector<ad::Var<Scalar>> parts;
  for (auto [a, b] : {std::pair{s.visual, q.visual}, std::pair{s.textual, q.textual}}) {
    if (!a.valid() || !b.valid() || a.rows() == 0 || b.rows() == 0) continue;
    parts.push_back(mean_cosine(a, b));
  }
  if (parts.empty()) throw DomainError("decoupled_cosine_score: both branches empty");
  return ad::sum_all(ad::vcat(parts));
}

// Value-only conveniences.

template <typename Scalar>
struct PairDistanceValues {
  Mat<Scalar> support;
  Mat<Scalar> query;
};

template <typename Scalar>
struct TokenSet {
  Mat<Scalar> visual;
  Mat<Scalar> textual;
};

namespace detail {
template <typename Scalar>
BranchTokens<Scalar> constants(ad::Tape<Scalar>& tape, const TokenSet<Scalar>& t) {
  return {tape.constant(t.visual), tape.constant(t.textual)};
}
}  // namespace detail

template <typename Scalar>
PairDistanceValues<Scalar> token_min_distances(const TokenSet<Scalar>& s, const TokenSet<Scalar>& q) {
  ad::Tape<Scalar> tape(false);
  const auto pd = token_min_distances(detail::constants(tape, s), detail::constants(tape, q));
  return {pd.support.value(), pd.query.value()};
}

template <typename Scalar>
Scalar mpmm_distance(const PairDistanceValues<Scalar>& pd, int u) {
  ad::Tape<Scalar> tape(false);
  return mpmm_distance(PairDistances<Scalar>{tape.constant(pd.support), tape.constant(pd.query)}, u).value()(0, 0);
}

template <typename Scalar>
Scalar mpmm_distance(const TokenSet<Scalar>& s, const TokenSet<Scalar>& q, int u) {
  ad::Tape<Scalar> tape(false);
  return mpmm_distance(token_min_distances(detail::constants(tape, s), detail::constants(tape, q)), u).value()(0, 0);
}

template <typename Scalar>
Scalar bimhm_distance(const TokenSet<Scalar>& s, const TokenSet<Scalar>& q) {
  ad::Tape<Scalar> tape(false);
  return bimhm_distance(detail::constants(tape, s), detail::constants(tape, q)).value()(0, 0);
}

template <typename Scalar>
Scalar hausdorff_distance(const TokenSet<Scalar>& s, const TokenSet<Scalar>& q) {
  ad::Tape<Scalar> tape(false);
  return hausdorff_distance(detail::constants(tape, s), detail::constants(tape, q)).value()(0, 0);
}

/// Avg (decoupled = false): cosine of the means of the fused token matrices,
/// here the row-stack of both branches. Dec-Avg (decoupled = true): sum of per-branch cosines.
template <typename Scalar>
Scalar pooled_cosine_score(const TokenSet<Scalar>& a, const TokenSet<Scalar>& b, bool decoupled) {
  ad::Tape<Scalar> tape(false);
  if (decoupled) return decoupled_cosine_score(detail::constants(tape, a), detail::constants(tape, b)).value()(0, 0);
  auto fused = [&](const TokenSet<Scalar>& t) {
    Mat<Scalar> m(t.visual.rows() + t.textual.rows(), std::max(t.visual.cols(), t.textual.cols()));
    if (t.visual.rows() > 0) m.topRows(t.visual.rows()) = t.visual;
    if (t.textual.rows() > 0) m.bottomRows(t.textual.rows()) = t.textual;
    return tape.constant(m);
  };
  const auto fa = fused(a), fb = fused(b);
  if (fa.rows() == 0 || fb.rows() == 0) throw DomainError("pooled_cosine_score: empty token set");
  return mean_cosine(fa, fb).value()(0, 0);
}

}  // namespace fsar::model

#endif  // FSAR_MODEL_MPMM_HPP
