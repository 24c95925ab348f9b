#include "fsar/core/adam.hpp"
#include "fsar/core/attention.hpp"
#include "fsar/core/gradcheck.hpp"
#include "fsar/core/ops.hpp"

#include <doctest.h>

#include "support.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

using namespace fsar;
using ad::Tape;
using ad::Var;
using fsar::testing::reference_attention;
using fsar::testing::Builder;
using fsar::testing::grad_error;

namespace {

MatD randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("softmax examples") {
  MatD x(1, 2);
  x << 0, 0;
  CHECK(softmax_rows(x)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  x << 1, 0;
  const MatD y = softmax_rows(x);
  CHECK(y(0, 0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
  CHECK(y(0, 0) == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(y(0, 1) == doctest::Approx(0.26894).epsilon(1e-5));
  MatD one(1, 1);
  one << -123.4;
  CHECK(softmax_rows(one)(0, 0) == 1.0);
  CHECK_THROWS_AS(softmax_rows(MatD(2, 0)), DomainError);
}

TEST_CASE("softmax rows sum to one and ignore shifts") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const MatD x = randn(3, 1 + trial % 7, rng, 10.0);
    const MatD y = softmax_rows(x);
    CHECK((y.array() >= 0).all());
    for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(y.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    const MatD shifted = softmax_rows(MatD(x.array() + 1000.0));
    CHECK((shifted - y).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("attention examples") {
  std::mt19937_64 rng(2);
  const auto id = AttentionParams<double>::identity(4);
  const MatD q = randn(1, 4, rng), k = randn(1, 4, rng), v = randn(1, 4, rng);
  CHECK((scaled_dot_attention(q, k, v, id) - v).cwiseAbs().maxCoeff() < 1e-15);

  MatD kk(2, 4);
  kk << k, k;
  MatD vv(2, 4);
  vv << v, v;
  const MatD many_q = randn(5, 4, rng);
  const MatD out = scaled_dot_attention(many_q, kk, vv, id);
  for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK((out.row(r) - v).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(scaled_dot_attention(q, MatD(0, 4), MatD(0, 4), id), DomainError);
}

TEST_CASE("attention matches straight-line evaluation") {
  std::mt19937_64 rng(3);
  for (int heads : {1, 2, 4}) {
    const auto p = AttentionParams<double>::random(4, heads, rng);
    const MatD q = randn(3, 4, rng), k = randn(3, 4, rng), v = randn(3, 4, rng);
    CHECK((scaled_dot_attention(q, k, v, p) - reference_attention(q, k, v, p)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(AttentionParams<double>::random(6, 4, rng), ShapeError);
}

TEST_CASE("backward examples") {
  Tape<double> tape;
  MatD x0(1, 2);
  x0 << 1, -2;
  const auto x = tape.parameter(x0);
  const auto p = tape.parameter(MatD::Ones(2, 2));
  tape.backward(ad::sum_all(ad::rowwise_dot(x, x)));
  CHECK(tape.grad(x)(0, 0) == 2.0);
  CHECK(tape.grad(x)(0, 1) == -4.0);
  CHECK(tape.grad(p).isZero(0));
  CHECK_THROWS_AS(tape.backward(x), DomainError);

  // Shared input: contributions from both consumers add up.
  Tape<double> t2;
  const auto y = t2.parameter(x0);
  t2.backward(ad::sum_all(ad::add(ad::scale(y, 3.0), ad::scale(y, 4.0))));
  CHECK(t2.grad(y)(0, 0) == 7.0);
}

TEST_CASE("composed softmax and matmul gradient") {
  std::mt19937_64 rng(4);
  const MatD x = randn(2, 3, rng), w = randn(3, 3, rng);
  const double err = grad_error(
      [](Tape<double>&, const std::vector<Var<double>>& v) { return ad::softmax_rows(ad::matmul(v[0], v[1])); },
      {x, w});
  CHECK(err < 1e-4);
}

TEST_CASE("every primitive matches finite differences") {
  std::mt19937_64 rng(5);
  const MatD a = randn(3, 4, rng), b = randn(3, 4, rng), c = randn(4, 2, rng), r = randn(1, 4, rng);
  const MatD s = randn(1, 1, rng), w = randn(3, 1, rng);
  using V = std::vector<Var<double>>;
  struct Case {
    const char* name;
    Builder fn;
    std::vector<MatD> in;
  };
  const std::vector<Case> cases = {
      {"matmul", [](auto&, const V& v) { return ad::matmul(v[0], v[1]); }, {a, c}},
      {"matmul_nt", [](auto&, const V& v) { return ad::matmul_nt(v[0], v[1]); }, {a, b}},
      {"add", [](auto&, const V& v) { return ad::add(v[0], v[1]); }, {a, b}},
      {"sub", [](auto&, const V& v) { return ad::sub(v[0], v[1]); }, {a, b}},
      {"add_row", [](auto&, const V& v) { return ad::add_row(v[0], v[1]); }, {a, r}},
      {"affine", [](auto&, const V& v) { return ad::affine(v[0], -1.5, 0.3); }, {a}},
      {"scale_by", [](auto&, const V& v) { return ad::scale_by(v[0], v[1]); }, {a, s}},
      {"scale_rows", [](auto&, const V& v) { return ad::scale_rows(v[0], v[1]); }, {a, w}},
      {"softmax_rows", [](auto&, const V& v) { return ad::softmax_rows(v[0]); }, {a}},
      {"mean_rows", [](auto&, const V& v) { return ad::mean_rows(v[0]); }, {a}},
      {"sum_all", [](auto&, const V& v) { return ad::sum_all(v[0]); }, {a}},
      {"slice_rows", [](auto&, const V& v) { return ad::slice_rows(v[0], 1, 2); }, {a}},
      {"slice_cols", [](auto&, const V& v) { return ad::slice_cols(v[0], 1, 2); }, {a}},
      {"vcat", [](auto&, const V& v) { return ad::vcat(V{v[0], v[1], v[0]}); }, {a, b}},
      {"hcat", [](auto&, const V& v) { return ad::hcat(V{v[0], v[1]}); }, {a, b}},
      {"pad_rows", [](auto&, const V& v) { return ad::pad_rows(v[0], 5); }, {a}},
      {"normalize_rows", [](auto&, const V& v) { return ad::normalize_rows(v[0]); }, {a}},
      {"rowwise_dot", [](auto&, const V& v) { return ad::rowwise_dot(v[0], v[1]); }, {a, b}},
      {"pairwise_distances", [](auto&, const V& v) { return ad::pairwise_distances(v[0], v[1]); }, {a, b}},
      {"gather", [](auto&, const V& v) { return ad::gather(v[0], {{0, 1}, {2, 3}, {0, 1}}); }, {a}},
      {"assemble",
       [](auto&, const V& v) {
         return ad::assemble(V{ad::sum_all(v[0]), ad::sum_all(v[1]), ad::sum_all(ad::rowwise_dot(v[0], v[1]))}, 1, 3);
       },
       {a, b}},
      {"softmax_nll", [](auto&, const V& v) { return ad::softmax_nll(v[0], {0, 3, 2}); }, {a}},
      {"attend",
       [](auto& tape, const V& v) {
         std::mt19937_64 g(9);
         const auto w = bind(tape, AttentionParams<double>::random(4, 2, g), true);
         return attend(v[0], v[1], v[1], w);
       },
       {a, b}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_error(c.fn, c.in) < 1e-4);
  }
}

TEST_CASE("attention weights gradients") {
  std::mt19937_64 rng(6);
  const auto p = AttentionParams<double>::random(4, 2, rng);
  const MatD q = randn(2, 4, rng), k = randn(3, 4, rng);
  std::vector<MatD> in = {q, k, p.wq, p.wk, p.wv, p.wo, p.bq, p.bk, p.bv, p.bo};
  const double err = grad_error(
      [](Tape<double>&, const std::vector<Var<double>>& v) {
        AttentionVars<double> w{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], 2};
        return attend(v[0], v[1], v[1], w);
      },
      in);
  CHECK(err < 1e-4);
}

TEST_CASE("random composed graphs match finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_int_distribution<int> depth_d(1, 6), op_d(0, 8);
    std::vector<int> ops(depth_d(rng));
    for (auto& o : ops) o = op_d(rng);
    const MatD x = randn(3, 4, rng, 0.7), w = randn(4, 4, rng, 0.5), c = randn(2, 4, rng);
    auto fn = [ops](Tape<double>& tape, const std::vector<Var<double>>& v) {
      Var<double> h = v[0];
      for (int o : ops) {
        switch (o) {
          case 0: h = ad::matmul(h, v[1]); break;
          case 1: h = ad::softmax_rows(h); break;
          case 2: h = ad::add(h, ad::scale(v[0], 0.5)); break;
          case 3: h = ad::normalize_rows(ad::affine(h, 1.0, 0.1)); break;
          case 4: h = ad::add_row(h, ad::mean_rows(h)); break;
          case 5: h = ad::matmul(ad::softmax_rows(ad::matmul_nt(h, v[0])), v[0]); break;
          case 6: h = ad::matmul(ad::pairwise_distances(h, v[2]), v[2]); break;
          case 7: h = ad::scale_rows(h, ad::rowwise_dot(h, v[0])); break;
          default: h = ad::vcat(std::vector<Var<double>>{ad::slice_rows(h, 1, 2), ad::slice_rows(h, 0, 1)}); break;
        }
      }
      (void)tape;
      return h;
    };
    CAPTURE(trial);
    CHECK(grad_error(fn, {x, w, c}, 100 + trial) < 1e-4);
  }
}

TEST_CASE("finite difference checker") {
  std::function<double(const ColVec<double>&)> sq = [](const ColVec<double>& x) { return x(0) * x(0); };
  ColVec<double> p(1), g(1);
  p << 3;
  g << 6;
  CHECK(finite_diff_check(sq, p, g, 1e-5).max_rel_error < 1e-9);
  std::function<double(const ColVec<double>&)> lin = [](const ColVec<double>& x) { return 2 * x(0) - 5 * x(1); };
  ColVec<double> p2(2), g2(2);
  p2 << 0.3, -4;
  g2 << 2, -5;
  CHECK(finite_diff_check(lin, p2, g2, 1e-5).max_rel_error < 1e-9);
  g2 << 2, 5;
  CHECK_FALSE(finite_diff_check(lin, p2, g2, 1e-5).passed(1e-4));

  std::function<double(const ColVec<double>&)> bad = [](const ColVec<double>& x) { return std::log(x(0)); };
  ColVec<double> p3(1), g3(1);
  p3 << 0;
  g3 << 1;
  const auto res = finite_diff_check(bad, p3, g3, 1e-5);
  CHECK_FALSE(res.finite);
  CHECK_FALSE(res.passed(1.0));
  CHECK_THROWS_AS(finite_diff_check(sq, p, g, 0.0), DomainError);
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
  AdamState<double> st;
  st.schedule.base_lr = 1e-3;
  MatD x(1, 3);
  x << 1, 2, 3;
  const MatD x0 = x;
  MatD g(1, 3);
  g << 0.5, -20, 3;
  adam_step(st, {&x}, {g});
  CHECK(std::abs(x(0, 0) - (x0(0, 0) - 1e-3)) < 1e-9);
  CHECK(std::abs(x(0, 1) - (x0(0, 1) + 1e-3)) < 1e-9);
  CHECK(std::abs(x(0, 2) - (x0(0, 2) - 1e-3)) < 1e-9);
  CHECK(st.step == 1);
  CHECK(st.m[0].rows() == x.rows());
  CHECK(st.v[0].cols() == x.cols());
}

TEST_CASE("adam zero gradient is the identity for any state") {
  std::mt19937_64 rng(8);
  AdamState<double> st;
  MatD x = randn(2, 3, rng), y = randn(1, 4, rng);
  for (int i = 0; i < 5; ++i) adam_step(st, {&x, &y}, {randn(2, 3, rng), randn(1, 4, rng)});
  const MatD x0 = x, y0 = y;
  adam_step(st, {&x, &y}, {MatD::Zero(2, 3), MatD::Zero(1, 4)});
  CHECK(x == x0);
  CHECK(y == y0);

  AdamState<double> fresh;
  MatD z = randn(2, 2, rng);
  const MatD z0 = z;
  adam_step(fresh, {&z}, {MatD::Zero(2, 2)});
  CHECK(z == z0);
}

TEST_CASE("adam schedule and errors") {
  MultiStepSchedule s;
  s.base_lr = 0.01;
  s.milestones = {{100, 0.1}};
  CHECK(s.lr_at(99) == 0.01);
  CHECK(s.lr_at(100) == doctest::Approx(0.001).epsilon(1e-15));
  const auto h = MultiStepSchedule::halves(1e-3, 2000);
  CHECK(h.lr_at(999) == 1e-3);
  CHECK(h.lr_at(1000) == doctest::Approx(1e-4));
  CHECK(h.lr_at(1500) == doctest::Approx(1e-5));

  AdamState<double> st;
  MatD x = MatD::Zero(2, 2);
  CHECK_THROWS_AS(adam_step(st, {&x}, {MatD::Zero(2, 3)}), DomainError);
  CHECK_THROWS_AS(adam_step(st, {&x}, {}), DomainError);
}

TEST_CASE("forward evaluation is bit-deterministic") {
  std::mt19937_64 r1(42), r2(42);
  const auto p1 = AttentionParams<double>::random(8, 2, r1);
  const auto p2 = AttentionParams<double>::random(8, 2, r2);
  const MatD q = randn(5, 8, r1);
  CHECK(scaled_dot_attention(q, q, q, p1) == scaled_dot_attention(q, q, q, p2));
}
