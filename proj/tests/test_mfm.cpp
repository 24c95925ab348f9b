#include "fsar/model/head.hpp"
#include "fsar/model/mfm.hpp"

#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace fsar;
using namespace fsar::model;
using fsar::testing::grad_error;
using fsar::testing::randn;
using fsar::testing::reference_attention;

namespace {

struct Oracle {
  MatD features, spatiotemporal, textual;
};

// The module composed by hand from plain matrices.
Oracle straight_line(const MatD& visual, const MatD& textual, int frames, int sp, const MfmParams<double>& p) {
  MatD spt(frames, visual.cols());
  for (int f = 0; f < frames; ++f) {
    const MatD x = visual.middleRows(f * sp, sp);
    const MatD y = reference_attention(x, x, x, p.spatial) + x;
    spt.row(f) = y.colwise().sum() / double(sp);
  }
  spt = reference_attention(spt, spt, spt, p.temporal) + spt;
  Oracle o;
  o.spatiotemporal = spt;
  o.features = reference_attention(spt, textual, textual, p.visual_cross) + spt;
  o.textual = reference_attention(textual, spt, spt, p.textual_cross) + textual;
  return o;
}

double max_abs(const MatD& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("downsample examples") {
  std::mt19937_64 rng(1);
  auto p = MfmParams<double>::identity_downsample(5, 1, rng);
  const MatD x = randn(7, 5, rng);
  CHECK(downsample(x, p) == x);

  p = MfmParams<double>::random(5, 3, 1, rng);
  const MatD zero = MatD::Zero(4, 5);
  const MatD y = downsample(zero, p);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(y.row(r) == p.down_b.row(0));
  CHECK_THROWS_AS(downsample(MatD(MatD::Zero(2, 4)), p), ShapeError);

  const MatD ref = (x * p.down_w).rowwise() + p.down_b.row(0);
  CHECK(max_abs(downsample(x, p) - ref) < 1e-14);
}

TEST_CASE("parameter counts") {
  CHECK(std::size_t(4096) * 256 + 256 == 1048832);
  std::mt19937_64 rng(2);
  for (auto [d, dp] : {std::pair{6, 4}, std::pair{4, 4}, std::pair{10, 2}}) {
    const auto p = MfmParams<double>::random(d, dp, 1, rng);
    std::size_t hand = 0;
    p.for_each([&](const std::string&, const MatD& m) { hand += static_cast<std::size_t>(m.size()); });
    CHECK(count_params(p) == hand);
    const std::size_t shapes = std::size_t(d) * dp + dp + 4 * (4 * std::size_t(dp) * dp + 4 * std::size_t(dp));
    CHECK(count_params(p) == shapes);
    CHECK(count_params(std::size_t(d), std::size_t(dp)) == shapes);
    HeadParams<double> h{p};
    CHECK(count_params(h) == shapes + 1);
  }
  CHECK(count_params(4096, 128) < count_params(4096, 256));
  const auto c128 = count_params(4096, 128), c256 = count_params(4096, 256), c512 = count_params(4096, 512);
  CHECK(c512 - c256 > c256 - c128);
  CHECK(count_head_params(64, 64) == 70721);
}

TEST_CASE("identity and zero-output configurations") {
  std::mt19937_64 rng(3);
  auto p = MfmParams<double>::random(6, 6, 1, rng);
  p.zero_attention_outputs();
  const MatD vis = randn(3 * 4, 6, rng), txt = randn(5, 6, rng);
  const auto out = enhance_visual(vis, 3, 4, txt, p);
  MatD mean(3, 6);
  for (int f = 0; f < 3; ++f) mean.row(f) = vis.middleRows(f * 4, 4).colwise().mean();
  CHECK(max_abs(out.features - mean) < 1e-14);
  CHECK(max_abs(out.spatiotemporal - mean) < 1e-14);
  CHECK(enhance_textual(txt, out.spatiotemporal, p) == txt);

  // Single frame with a single spatial token: pooling keeps the token.
  auto q = MfmParams<double>::random(6, 6, 1, rng);
  const MatD one = randn(1, 6, rng);
  const auto single = enhance_visual(one, 1, 1, txt, q, {false, false, false});
  CHECK(single.spatiotemporal == one);
}

TEST_CASE("matches straight-line evaluation") {
  std::mt19937_64 rng(4);
  for (int heads : {1, 2}) {
    const auto p = MfmParams<double>::random(4, 4, heads, rng);
    const MatD vis = randn(2 * 4, 4, rng), txt = randn(3, 4, rng);
    const auto got = enhance_visual(vis, 2, 4, txt, p);
    const auto want = straight_line(vis, txt, 2, 4, p);
    CHECK(max_abs(got.features - want.features) < 1e-12);
    CHECK(max_abs(got.spatiotemporal - want.spatiotemporal) < 1e-12);
    CHECK(max_abs(enhance_textual(txt, got.spatiotemporal, p) - want.textual) < 1e-12);
  }
}

TEST_CASE("flags bypass stages exactly") {
  std::mt19937_64 rng(5);
  const auto p = MfmParams<double>::random(4, 4, 1, rng);
  const MatD vis = randn(3 * 2, 4, rng), txt = randn(4, 4, rng);
  const auto all = enhance_visual(vis, 3, 2, txt, p);

  const auto no_st = enhance_visual(vis, 3, 2, txt, p, {false, true, true});
  MatD mean(3, 4);
  for (int f = 0; f < 3; ++f) mean.row(f) = vis.middleRows(f * 2, 2).colwise().sum() / 2.0;
  CHECK(max_abs(no_st.spatiotemporal - mean) < 1e-15);

  const auto no_v = enhance_visual(vis, 3, 2, txt, p, {true, false, true});
  CHECK(no_v.features == no_v.spatiotemporal);
  CHECK(no_v.spatiotemporal == all.spatiotemporal);

  CHECK(enhance_textual(txt, all.spatiotemporal, p, {true, true, false}) == txt);

  const auto empty = enhance_visual(vis, 3, 2, MatD(0, 4), p);
  CHECK(empty.cross_skipped);
  CHECK(empty.features == empty.spatiotemporal);
  CHECK(enhance_textual(MatD(0, 4), all.spatiotemporal, p).rows() == 0);

  CHECK_THROWS_AS(enhance_visual(vis, 4, 2, txt, p), ShapeError);
}

TEST_CASE("spatial permutation within a frame leaves the output unchanged") {
  std::mt19937_64 rng(6);
  const auto p = MfmParams<double>::random(5, 5, 1, rng);
  const int frames = 3, sp = 4;
  const MatD vis = randn(frames * sp, 5, rng), txt = randn(3, 5, rng);
  MatD perm = vis;
  for (int f = 0; f < frames; ++f) {
    std::vector<int> order{0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    for (int s = 0; s < sp; ++s) perm.row(f * sp + s) = vis.row(f * sp + order[s]);
  }
  const auto a = enhance_visual(vis, frames, sp, txt, p);
  const auto b = enhance_visual(perm, frames, sp, txt, p);
  CHECK(max_abs(a.features - b.features) < 1e-12);
  CHECK(max_abs(enhance_textual(txt, a.spatiotemporal, p) - enhance_textual(txt, b.spatiotemporal, p)) < 1e-12);
}

TEST_CASE("gradients of every parameter match finite differences") {
  std::mt19937_64 rng(7);
  for (int heads : {1, 2}) {
    const auto p = MfmParams<double>::random(6, 4, heads, rng);
    const MatD tokens = randn(2 * 3 + 3, 6, rng);
    std::vector<MatD> in;
    p.for_each([&](const std::string&, const MatD& m) { in.push_back(m); });
    in.push_back(tokens);
    const double err = grad_error(
        [heads](ad::Tape<double>& tape, const std::vector<ad::Var<double>>& v) {
          MfmVars<double> w{v[0], v[1], {}, {}, {}, {}};
          AttentionVars<double>* blocks[] = {&w.spatial, &w.temporal, &w.visual_cross, &w.textual_cross};
          for (int b = 0; b < 4; ++b) {
            const auto* x = &v[2 + 8 * b];
            // for_each order: wq bq wk bk wv bv wo bo
            *blocks[b] = {x[0], x[2], x[4], x[6], x[1], x[3], x[5], x[7], heads};
          }
          const auto x = downsample(v.back(), w);
          const auto vis = ad::slice_rows(x, 0, 6), txt = ad::slice_rows(x, 6, 3);
          const auto fv = enhance_visual(vis, 2, 3, txt, w, {});
          const auto ft = enhance_textual(txt, fv.spatiotemporal, w, {});
          (void)tape;
          return ad::vcat(std::vector<ad::Var<double>>{fv.features, ft});
        },
        in);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("initialisation is seeded and bounded") {
  std::mt19937_64 a(8), b(8);
  const auto p = MfmParams<double>::random(9, 4, 1, a);
  const auto q = MfmParams<double>::random(9, 4, 1, b);
  CHECK(p.down_w == q.down_w);
  CHECK(p.textual_cross.wo == q.textual_cross.wo);
  CHECK(max_abs(p.down_w) <= 1.0 / 3.0);
  CHECK(max_abs(p.spatial.wq) <= 0.5);
}
