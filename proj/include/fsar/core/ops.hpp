#ifndef FSAR_CORE_OPS_HPP
#define FSAR_CORE_OPS_HPP

#include "fsar/core/tape.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace fsar {

// ---------------------------------------------------------------------------
// Plain kernels (no tape).
// ---------------------------------------------------------------------------

/// Row-wise softmax with max subtraction.
template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.cols() == 0) throw DomainError("softmax: empty last axis");
  Mat<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

/// Cosine similarity with the zero-norm convention: 0 if either norm < eps.
template <typename A, typename B>
typename A::Scalar cosine(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v,
                          typename A::Scalar eps = typename A::Scalar(1e-12)) {
  const auto nu = u.norm();
  const auto nv = v.norm();
  if (nu < eps || nv < eps) return 0;
  return u.cwiseProduct(v).sum() / (nu * nv);
}

/// Euclidean distance table between the rows of `a` and the rows of `b`.
template <typename Scalar>
Mat<Scalar> pairwise_distances(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols()) {
    throw ShapeError("pairwise_distances: width mismatch " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }
  Mat<Scalar> d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

namespace ad {

// ---------------------------------------------------------------------------
// Differentiable primitives. Every op checks shapes eagerly and records a
// closure that pushes input gradients.
// ---------------------------------------------------------------------------

namespace detail {
template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  auto* t = a.tape();
  const auto ia = a.id(), ib = b.id();
  Mat<Scalar> out = a.value() * b.value();
  return t->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

/// a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()) + "^T");
  }
  auto* t = a.tape();
  const auto ia = a.id(), ib = b.id();
  Mat<Scalar> out = a.value() * b.value().transpose();
  return t->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  Mat<Scalar> out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  Mat<Scalar> out = a.value() - b.value();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, -g);
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }

/// Adds the 1 x d row `r` to every row of `a`.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_str(a.rows(), a.cols()) + " + row " +
                     shape_str(r.rows(), r.cols()));
  }
  const auto ia = a.id(), ir = r.id();
  Mat<Scalar> out = a.value().rowwise() + r.value().row(0);
  return a.tape()->record(std::move(out), {a, r}, [ia, ir](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
  });
}

/// Element-wise `a * mul + shift` with constant coefficients.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& a, Scalar mul, Scalar shift = Scalar(0)) {
  const auto ia = a.id();
  Mat<Scalar> out = (a.value().array() * mul + shift).matrix();
  return a.tape()->record(std::move(out), {a}, [ia, mul](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, g * mul);
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar c) { return affine(a, c); }

/// `s * a` where `s` is a 1 x 1 node.
template <typename Scalar>
Var<Scalar> scale_by(const Var<Scalar>& a, const Var<Scalar>& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scale must be 1x1");
  const auto ia = a.id(), is = s.id();
  Mat<Scalar> out = a.value() * s.value()(0, 0);
  return a.tape()->record(std::move(out), {a, s}, [ia, is](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(is)(0, 0));
    if (tp.requires_grad(is)) {
      Mat<Scalar> gs(1, 1);
      gs(0, 0) = g.cwiseProduct(tp.value(ia)).sum();
      tp.accumulate(is, gs);
    }
  });
}

/// Scales row i of `a` by w(i); `w` is n x 1.
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& a, const Var<Scalar>& w) {
  if (w.cols() != 1 || w.rows() != a.rows()) {
    throw ShapeError("scale_rows: weights " + shape_str(w.rows(), w.cols()) + " for " +
                     shape_str(a.rows(), a.cols()));
  }
  const auto ia = a.id(), iw = w.id();
  Mat<Scalar> out = w.value().col(0).asDiagonal() * a.value();
  return a.tape()->record(std::move(out), {a, w}, [ia, iw](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, tp.value(iw).col(0).asDiagonal() * g);
    if (tp.requires_grad(iw)) tp.accumulate(iw, g.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  const auto ia = a.id();
  Mat<Scalar> y = fsar::softmax_rows(a.value());
  Mat<Scalar> ycopy = a.tape()->recording() ? y : Mat<Scalar>{};
  return a.tape()->record(std::move(y), {a}, [ia, ycopy](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    const ColVec<Scalar> dot = g.cwiseProduct(ycopy).rowwise().sum();
    tp.accumulate(ia, ycopy.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

/// Mean over rows: n x d -> 1 x d.
template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& a) {
  if (a.rows() == 0) throw DomainError("mean_rows: no rows");
  const auto ia = a.id();
  const auto n = a.rows();
  Mat<Scalar> out = a.value().colwise().mean();
  return a.tape()->record(std::move(out), {a}, [ia, n](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, (g / Scalar(n)).replicate(n, 1));
  });
}

template <typename Scalar>
Var<Scalar> sum_all(const Var<Scalar>& a) {
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, Mat<Scalar>::Constant(r, c, g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of " + std::to_string(a.rows()));
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Mat<Scalar> out = a.value().middleRows(start, count);
  return a.tape()->record(std::move(out), {a},
                          [ia, r, c, start, count](Tape<Scalar>& tp, const Mat<Scalar>& g) {
                            Mat<Scalar> full = Mat<Scalar>::Zero(r, c);
                            full.middleRows(start, count) = g;
                            tp.accumulate(ia, full);
                          });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: out of range");
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Mat<Scalar> out = a.value().middleCols(start, count);
  return a.tape()->record(std::move(out), {a},
                          [ia, r, c, start, count](Tape<Scalar>& tp, const Mat<Scalar>& g) {
                            Mat<Scalar> full = Mat<Scalar>::Zero(r, c);
                            full.middleCols(start, count) = g;
                            tp.accumulate(ia, full);
                          });
}

/// Stacks matrices vertically; all parts share a column count.
template <typename Scalar>
Var<Scalar> vcat(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("vcat: no parts");
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("vcat: column mismatch");
    rows += p.rows();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), p.rows());
    at += p.rows();
  }
  return parts.front().tape()->record(
      std::move(out), parts, [layout](Tape<Scalar>& tp, const Mat<Scalar>& g) {
        Eigen::Index off = 0;
        for (const auto& [id, n] : layout) {
          if (tp.requires_grad(id)) tp.accumulate(id, g.middleRows(off, n));
          off += n;
        }
      });
}

/// Concatenates matrices horizontally; all parts share a row count.
template <typename Scalar>
Var<Scalar> hcat(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("hcat: no parts");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("hcat: row mismatch");
    cols += p.cols();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  return parts.front().tape()->record(
      std::move(out), parts, [layout](Tape<Scalar>& tp, const Mat<Scalar>& g) {
        Eigen::Index off = 0;
        for (const auto& [id, n] : layout) {
          if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(off, n));
          off += n;
        }
      });
}

/// Appends zero rows until `a` has `rows` rows. Never truncates.
template <typename Scalar>
Var<Scalar> pad_rows(const Var<Scalar>& a, Eigen::Index rows) {
  if (rows <= a.rows()) return a;
  const auto ia = a.id();
  const auto n = a.rows();
  Mat<Scalar> out = Mat<Scalar>::Zero(rows, a.cols());
  out.topRows(n) = a.value();
  return a.tape()->record(std::move(out), {a}, [ia, n](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    tp.accumulate(ia, g.topRows(n));
  });
}

/// Unit-normalizes each row; rows with norm below `eps` map to zero.
template <typename Scalar>
Var<Scalar> normalize_rows(const Var<Scalar>& a, Scalar eps = Scalar(1e-12)) {
  const auto ia = a.id();
  const Mat<Scalar>& x = a.value();
  ColVec<Scalar> norms = x.rowwise().norm();
  Mat<Scalar> y = Mat<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    if (norms(r) >= eps) y.row(r) = x.row(r) / norms(r);
  Mat<Scalar> ycopy = a.tape()->recording() ? y : Mat<Scalar>{};
  return a.tape()->record(std::move(y), {a},
                          [ia, norms, ycopy, eps](Tape<Scalar>& tp, const Mat<Scalar>& g) {
                            Mat<Scalar> ga = Mat<Scalar>::Zero(g.rows(), g.cols());
                            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                              if (norms(r) < eps) continue;
                              const Scalar d = ycopy.row(r).dot(g.row(r));
                              ga.row(r) = (g.row(r) - d * ycopy.row(r)) / norms(r);
                            }
                            tp.accumulate(ia, ga);
                          });
}

/// Row-wise inner products: n x d, n x d -> n x 1.
template <typename Scalar>
Var<Scalar> rowwise_dot(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "rowwise_dot");
  const auto ia = a.id(), ib = b.id();
  Mat<Scalar> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.col(0).asDiagonal() * tp.value(ib));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.col(0).asDiagonal() * tp.value(ia));
  });
}

/// Euclidean distance table between rows of `a` (n x d) and rows of `b` (m x d).
/// At coincident points the subgradient 0 is used.
template <typename Scalar>
Var<Scalar> pairwise_distances(const Var<Scalar>& a, const Var<Scalar>& b) {
  const auto ia = a.id(), ib = b.id();
  Mat<Scalar> d = fsar::pairwise_distances(a.value(), b.value());
  Mat<Scalar> dcopy = a.tape()->recording() ? d : Mat<Scalar>{};
  return a.tape()->record(std::move(d), {a, b}, [ia, ib, dcopy](Tape<Scalar>& tp,
                                                                const Mat<Scalar>& g) {
    Mat<Scalar> w = Mat<Scalar>::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        if (dcopy(i, j) > Scalar(0)) w(i, j) = g(i, j) / dcopy(i, j);
    const Mat<Scalar>& av = tp.value(ia);
    const Mat<Scalar>& bv = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Mat<Scalar> ga = w.rowwise().sum().asDiagonal() * av - w * bv;
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ib)) {
      Mat<Scalar> gb = w.colwise().sum().transpose().asDiagonal() * bv - w.transpose() * av;
      tp.accumulate(ib, gb);
    }
  });
}

/// Picks entries (row, col) of `a` into a k x 1 column.
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& a, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& at) {
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Mat<Scalar> out(static_cast<Eigen::Index>(at.size()), 1);
  for (std::size_t k = 0; k < at.size(); ++k) {
    const auto [i, j] = at[k];
    if (i < 0 || i >= r || j < 0 || j >= c) throw ShapeError("gather: index out of range");
    out(static_cast<Eigen::Index>(k), 0) = a.value()(i, j);
  }
  return a.tape()->record(std::move(out), {a}, [ia, r, c, at](Tape<Scalar>& tp, const Mat<Scalar>& g) {
    Mat<Scalar> full = Mat<Scalar>::Zero(r, c);
    for (std::size_t k = 0; k < at.size(); ++k)
      full(at[k].first, at[k].second) += g(static_cast<Eigen::Index>(k), 0);
    tp.accumulate(ia, full);
  });
}

/// Lays 1 x 1 nodes out row-major into a rows x cols matrix.
template <typename Scalar>
Var<Scalar> assemble(const std::vector<Var<Scalar>>& scalars, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(scalars.size()) != rows * cols || scalars.empty()) {
    throw ShapeError("assemble: wrong element count");
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    if (scalars[k].rows() != 1 || scalars[k].cols() != 1) throw ShapeError("assemble: non-scalar");
    out(static_cast<Eigen::Index>(k) / cols, static_cast<Eigen::Index>(k) % cols) =
        scalars[k].value()(0, 0);
    ids.push_back(scalars[k].id());
  }
  return scalars.front().tape()->record(
      std::move(out), scalars, [ids, cols](Tape<Scalar>& tp, const Mat<Scalar>& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          Mat<Scalar> s(1, 1);
          s(0, 0) = g(static_cast<Eigen::Index>(k) / cols, static_cast<Eigen::Index>(k) % cols);
          tp.accumulate(ids[k], s);
        }
      });
}

/// Mean negative log-probability of `labels` under row-wise softmax(logits).
/// Probabilities below `floor` are clamped before the log; clamped rows pass
/// no gradient. `clamped` (optional) receives the number of clamped rows.
template <typename Scalar>
Var<Scalar> softmax_nll(const Var<Scalar>& logits, const std::vector<int>& labels,
                        Scalar floor = Scalar(1e-12), int* clamped = nullptr) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || labels.empty()) {
    throw ShapeError("softmax_nll: one label per row required");
  }
  const auto il = logits.id();
  const Mat<Scalar> p = fsar::softmax_rows(logits.value());
  const Scalar log_floor = std::log(floor);
  const auto b = static_cast<Scalar>(labels.size());
  std::vector<bool> is_clamped(labels.size(), false);
  Scalar total = 0;
  int n_clamped = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    if (labels[r] < 0 || labels[r] >= logits.cols()) throw DomainError("softmax_nll: label out of range");
    // log-softmax directly keeps precision for confident rows.
    const Scalar m = logits.value().row(row).maxCoeff();
    const Scalar lse = m + std::log((logits.value().row(row).array() - m).exp().sum());
    Scalar lp = logits.value()(row, labels[r]) - lse;
    if (lp < log_floor) {
      lp = log_floor;
      is_clamped[r] = true;
      ++n_clamped;
    }
    total -= lp;
  }
  if (clamped) *clamped = n_clamped;
  Mat<Scalar> out(1, 1);
  out(0, 0) = total / b;
  return logits.tape()->record(
      std::move(out), {logits}, [il, p, labels, is_clamped, b](Tape<Scalar>& tp, const Mat<Scalar>& g) {
        Mat<Scalar> gl = p;
        for (std::size_t r = 0; r < labels.size(); ++r) {
          const auto row = static_cast<Eigen::Index>(r);
          if (is_clamped[r]) {
            gl.row(row).setZero();
          } else {
            gl(row, labels[r]) -= Scalar(1);
          }
        }
        tp.accumulate(il, gl * (g(0, 0) / b));
      });
}

}  // namespace ad
}  // namespace fsar

#endif  // FSAR_CORE_OPS_HPP
