#ifndef FSAR_CORE_TAPE_HPP
#define FSAR_CORE_TAPE_HPP

#include "fsar/core/types.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

namespace fsar::ad {

template <typename Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Mat<Scalar>& value() const { return tape_->value(id_); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] Tape<Scalar>* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape over dense matrices.
///
/// Nodes are appended in evaluation order, so creation order is a topological
/// order and backward() simply walks the node list from the end. Each node's
/// gradient is the sum of the contributions pushed by its consumers.
///
/// A tape constructed with `recording = false` evaluates values only; no
/// backward closures are stored. Storage is a deque so `value()` references
/// stay valid while new nodes are appended.
template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  /// Receives the node's accumulated output gradient and pushes
  /// contributions to its inputs via accumulate().
  using Backward = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool recording() const { return recording_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  Var<Scalar> constant(Matrix value) { return push(std::move(value), false, {}); }

  /// Leaf that receives a gradient in backward().
  Var<Scalar> parameter(Matrix value) { return push(std::move(value), recording_, {}); }

  /// Appends an interior node. `fn` is kept only if recording and at least
  /// one input requires a gradient.
  Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  Var<Scalar> record(Matrix value, const std::vector<Var<Scalar>>& inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const {
    return recording_ && nodes_.at(id).requires_grad;
  }

  void accumulate(std::size_t id, const Matrix& contribution) {
    Node& n = nodes_.at(id);
    if (!recording_ || !n.requires_grad) return;
    if (n.grad.size() == 0 && n.value.size() != 0) {
      n.grad = contribution;
    } else {
      n.grad += contribution;
    }
  }

  /// Gradient of the last backward() w.r.t. `v`; zeros when `v` was unreachable.
  [[nodiscard]] Matrix grad(const Var<Scalar>& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(const Var<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw DomainError("backward: loss must be scalar, got " + shape_str(loss.rows(), loss.cols()));
    }
    if (!recording_) throw DomainError("backward: tape is not recording");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_.at(loss.id()).requires_grad) return;
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      // Copy: the closure may append to this node's inputs but never to itself.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var<Scalar> push(Matrix value, bool requires_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(fn), requires_grad});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  bool recording_;
  std::deque<Node> nodes_;
};

}  // namespace fsar::ad

#endif  // FSAR_CORE_TAPE_HPP
