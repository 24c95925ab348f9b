#include "fsar/model/mpmm.hpp"

#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace fsar;
using namespace fsar::model;
using fsar::testing::Brute;
using fsar::testing::grad_error;
using fsar::testing::randn;

namespace {

MatD col(std::initializer_list<double> v) {
  MatD m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

TokenSet<double> set(const MatD& v, const MatD& t) { return {v, t}; }

Brute random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, 6), width(1, 4), empty(0, 9);
  const int d = width(rng);
  Brute b;
  b.sv = randn(len(rng), d, rng);
  b.qv = randn(len(rng), d, rng);
  const int lt = empty(rng) == 0 ? 0 : len(rng);
  b.st = randn(lt, d, rng);
  b.qt = randn(lt == 0 ? 0 : len(rng), d, rng);
  return b;
}

MatD permute_rows(const MatD& m, std::mt19937_64& rng) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  MatD out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(order[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

TEST_CASE("hand example") {
  const auto s = set(col({0, 1}), col({1})), q = set(col({0, 2}), col({1}));
  const auto pd = token_min_distances(s, q);
  CHECK(pd.support == col({0, 1, 0}));
  CHECK(pd.query == col({0, 1, 0}));
  CHECK(mpmm_distance(pd, 1) == 2.0);
  CHECK(bimhm_distance(s, q) == 1.0);
  CHECK(hausdorff_distance(s, q) == 1.0);
  // u beyond the vector length sums everything and still divides by u.
  CHECK(mpmm_distance(pd, 5) == doctest::Approx(2.0 / 5).epsilon(1e-15));
  CHECK_THROWS_AS(mpmm_distance(pd, 0), DomainError);
}

TEST_CASE("identical inputs give zero distance and maximal similarity") {
  std::mt19937_64 rng(1);
  const auto a = set(randn(4, 3, rng), randn(5, 3, rng));
  const auto pd = token_min_distances(a, a);
  CHECK(pd.support.isZero(0));
  CHECK(pd.query.isZero(0));
  for (int u : {1, 3, 50}) CHECK(mpmm_distance(a, a, u) == 0.0);
  CHECK(bimhm_distance(a, a) == 0.0);
  CHECK(hausdorff_distance(a, a) == 0.0);
  CHECK(pooled_cosine_score(a, a, false) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pooled_cosine_score(a, a, true) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("pooled cosine examples") {
  MatD x(1, 2), y(1, 2);
  x << 1, 0;
  y << 0, 3;
  CHECK(pooled_cosine_score(set(x, y), set(y, x), true) == 0.0);
  CHECK(pooled_cosine_score(set(x, MatD(0, 2)), set(y, MatD(0, 2)), false) == 0.0);
  const MatD zero = MatD::Zero(1, 2);
  CHECK(pooled_cosine_score(set(zero, x), set(x, x), true) == doctest::Approx(1.0));
  CHECK_THROWS_AS(pooled_cosine_score(set(MatD(0, 2), MatD(0, 2)), set(x, x), false), DomainError);
}

TEST_CASE("metrics match brute force") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const Brute b = random_instance(rng);
    const auto s = set(b.sv, b.st), q = set(b.qv, b.qt);
    for (int u : {1, 2, 5, 10, 50}) CHECK(std::abs(mpmm_distance(s, q, u) - b.mpmm(u)) < 1e-9);
    CHECK(std::abs(bimhm_distance(s, q) - b.bimhm()) < 1e-9);
    CHECK(std::abs(hausdorff_distance(s, q) - b.hausdorff()) < 1e-9);
    const auto pd = token_min_distances(s, q);
    CHECK((pd.support.array() >= 0).all());
    // Each support entry is a lower bound on that token's distances.
    for (Eigen::Index h = 0; h < b.sv.rows(); ++h)
      for (Eigen::Index j = 0; j < b.qv.rows(); ++j)
        CHECK(pd.support(h, 0) <= (b.sv.row(h) - b.qv.row(j)).norm());
  }
}

TEST_CASE("u times distance is nondecreasing in u") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Brute b = random_instance(rng);
    const auto s = set(b.sv, b.st), q = set(b.qv, b.qt);
    double prev = 0;
    for (int u = 1; u <= 14; ++u) {
      const double cur = u * mpmm_distance(s, q, u);
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("token permutations leave every metric unchanged") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Brute b = random_instance(rng);
    const auto s = set(b.sv, b.st), q = set(b.qv, b.qt);
    const auto ps = set(permute_rows(b.sv, rng), permute_rows(b.st, rng));
    const auto pq = set(permute_rows(b.qv, rng), permute_rows(b.qt, rng));
    CHECK(mpmm_distance(ps, pq, 3) == doctest::Approx(mpmm_distance(s, q, 3)).epsilon(1e-12));
    CHECK(bimhm_distance(ps, pq) == doctest::Approx(bimhm_distance(s, q)).epsilon(1e-12));
    CHECK(hausdorff_distance(ps, pq) == doctest::Approx(hausdorff_distance(s, q)).epsilon(1e-12));
    if (b.st.rows() && b.qt.rows())
      CHECK(pooled_cosine_score(ps, pq, true) == doctest::Approx(pooled_cosine_score(s, q, true)).epsilon(1e-12));
    // Query-side permutation keeps the support-side vector itself.
    CHECK(token_min_distances(s, pq).support == token_min_distances(s, q).support);
  }
}

TEST_CASE("positive scaling scales distances and keeps cosines") {
  std::mt19937_64 rng(5);
  for (double c : {0.1, 7.0}) {
    const Brute b = random_instance(rng);
    const auto s = set(b.sv, b.st), q = set(b.qv, b.qt);
    const auto cs = set(c * b.sv, c * b.st), cq = set(c * b.qv, c * b.qt);
    CHECK(mpmm_distance(cs, cq, 4) == doctest::Approx(c * mpmm_distance(s, q, 4)).epsilon(1e-12));
    CHECK(bimhm_distance(cs, cq) == doctest::Approx(c * bimhm_distance(s, q)).epsilon(1e-12));
    CHECK(hausdorff_distance(cs, cq) == doctest::Approx(c * hausdorff_distance(s, q)).epsilon(1e-12));
    CHECK(pooled_cosine_score(cs, cq, false) == doctest::Approx(pooled_cosine_score(s, q, false)).epsilon(1e-12));
  }
}

TEST_CASE("duplicate support token never increases hausdorff") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Brute b = random_instance(rng);
    MatD sv2(b.sv.rows() + 1, b.sv.cols());
    sv2 << b.sv, b.sv.row(0);
    CHECK(hausdorff_distance(set(sv2, b.st), set(b.qv, b.qt)) <=
          hausdorff_distance(set(b.sv, b.st), set(b.qv, b.qt)) + 1e-15);
  }
}

TEST_CASE("single-branch and empty cases") {
  std::mt19937_64 rng(7);
  const MatD v = randn(3, 2, rng), w = randn(4, 2, rng);
  const auto s = set(v, MatD(0, 2)), q = set(w, MatD(0, 2));
  CHECK(token_min_distances(s, q).support.rows() == 3);
  CHECK(token_min_distances(s, q).query.rows() == 4);
  CHECK(bimhm_distance(s, q) == doctest::Approx(Brute{v, MatD(0, 2), w, MatD(0, 2)}.bimhm()));
  const auto none = set(MatD(0, 2), MatD(0, 2));
  CHECK_THROWS_AS(token_min_distances(none, q), DomainError);
  CHECK_THROWS_AS(bimhm_distance(none, q), DomainError);
  CHECK_THROWS_AS(hausdorff_distance(none, q), DomainError);
}

TEST_CASE("metric gradients match finite differences") {
  std::mt19937_64 rng(8);
  const std::vector<MatD> in{randn(4, 3, rng), randn(3, 3, rng), randn(5, 3, rng), randn(2, 3, rng)};
  using V = std::vector<ad::Var<double>>;
  auto bt = [](const V& v, int a) { return BranchTokens<double>{v[a], v[a + 1]}; };
  for (int u : {1, 3, 20}) {
    CHECK(grad_error([&](ad::Tape<double>&, const V& v) {
            return mpmm_distance(token_min_distances(bt(v, 0), bt(v, 2)), u);
          }, in) < 1e-4);
  }
  CHECK(grad_error([&](ad::Tape<double>&, const V& v) { return bimhm_distance(bt(v, 0), bt(v, 2)); }, in) < 1e-4);
  CHECK(grad_error([&](ad::Tape<double>&, const V& v) { return hausdorff_distance(bt(v, 0), bt(v, 2)); }, in) <
        1e-4);
  CHECK(grad_error([&](ad::Tape<double>&, const V& v) { return decoupled_cosine_score(bt(v, 0), bt(v, 2)); },
                   in) < 1e-4);
}

TEST_CASE("names round trip") {
  for (auto m : {Metric::mpmm, Metric::bimhm, Metric::hausdorff, Metric::avg, Metric::dec_avg})
    CHECK(parse_metric(to_string(m)) == m);
  for (auto b : {Branch::visual, Branch::textual, Branch::both}) CHECK(parse_branch(to_string(b)) == b);
  CHECK(to_string(Metric::dec_avg) == "dec-avg");
  CHECK_THROWS_AS(parse_metric("cosine"), DomainError);
}
