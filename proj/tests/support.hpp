#ifndef FSAR_TESTS_SUPPORT_HPP
#define FSAR_TESTS_SUPPORT_HPP

#include "fsar/archive/record.hpp"
#include "fsar/archive/synth.hpp"
#include "fsar/core/attention.hpp"
#include "fsar/core/gradcheck.hpp"
#include "fsar/core/ops.hpp"
#include "fsar/engine/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace fsar::testing {

template <typename Scalar = double>
Mat<Scalar> randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Mat<Scalar> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
  return m;
}

using Builder = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

// Reduces the output against fixed random weights and compares tape
// gradients of every input with central differences.
inline double grad_error(const Builder& build, const std::vector<MatD>& inputs, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  MatD probe;
  auto loss = [&](ad::Tape<double>& tape, const std::vector<MatD>& xs, bool as_params) {
    std::vector<ad::Var<double>> vars;
    for (const auto& x : xs) vars.push_back(as_params ? tape.parameter(x) : tape.constant(x));
    ad::Var<double> out = build(tape, vars);
    if (probe.size() == 0) probe = randn<double>(out.rows(), out.cols(), rng);
    return std::make_pair(ad::sum_all(ad::rowwise_dot(out, tape.constant(probe))), vars);
  };
  ad::Tape<double> tape;
  auto [l, vars] = loss(tape, inputs, true);
  tape.backward(l);

  Eigen::Index n = 0;
  for (const auto& x : inputs) n += x.size();
  ColVec<double> point(n), analytic(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const MatD g = tape.grad(vars[i]);
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j, ++k) {
      point(k) = inputs[i].data()[j];
      analytic(k) = g.data()[j];
    }
  }
  std::function<double(const ColVec<double>&)> f = [&](const ColVec<double>& p) {
    std::vector<MatD> xs = inputs;
    Eigen::Index q = 0;
    for (auto& x : xs)
      for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = p(q++);
    ad::Tape<double> t(false);
    return loss(t, xs, false).first.value()(0, 0);
  };
  const auto res = finite_diff_check(f, point, analytic, 1e-5);
  return res.finite ? res.max_rel_error : 1e300;
}

/// Attention evaluated loop by loop, one head at a time.
inline MatD reference_attention(const MatD& q, const MatD& k, const MatD& v, const AttentionParams<double>& p) {
  const MatD Q = (q * p.wq).rowwise() + p.bq.row(0);
  const MatD K = (k * p.wk).rowwise() + p.bk.row(0);
  const MatD V = (v * p.wv).rowwise() + p.bv.row(0);
  const Eigen::Index d = Q.cols(), dh = d / p.heads;
  MatD mixed(q.rows(), d);
  for (int h = 0; h < p.heads; ++h) {
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      std::vector<double> s(K.rows());
      double mx = -1e300;
      for (Eigen::Index j = 0; j < K.rows(); ++j) {
        double dot = 0;
        for (Eigen::Index c = 0; c < dh; ++c) dot += Q(i, h * dh + c) * K(j, h * dh + c);
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (Eigen::Index c = 0; c < dh; ++c) {
        double acc = 0;
        for (Eigen::Index j = 0; j < K.rows(); ++j) acc += s[j] / z * V(j, h * dh + c);
        mixed(i, h * dh + c) = acc;
      }
    }
  }
  return (mixed * p.wo).rowwise() + p.bo.row(0);
}

/// Exhaustive metric oracles: full distance tables, explicit sorts.
struct Brute {
  MatD sv, st, qv, qt;

  static std::vector<std::vector<double>> table(const MatD& a, const MatD& b) {
    std::vector<std::vector<double>> t(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        double acc = 0;
        for (Eigen::Index c = 0; c < a.cols(); ++c) acc += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
        t[static_cast<std::size_t>(i)].push_back(std::sqrt(acc));
      }
    return t;
  }
  static std::vector<double> row_mins(const std::vector<std::vector<double>>& t) {
    std::vector<double> out;
    for (const auto& row : t) out.push_back(*std::min_element(row.begin(), row.end()));
    return out;
  }
  static std::vector<std::vector<double>> transpose(const std::vector<std::vector<double>>& t) {
    std::vector<std::vector<double>> out(t.empty() ? 0 : t[0].size());
    for (const auto& row : t)
      for (std::size_t j = 0; j < row.size(); ++j) out[j].push_back(row[j]);
    return out;
  }
  [[nodiscard]] std::vector<std::pair<MatD, MatD>> branches() const {
    std::vector<std::pair<MatD, MatD>> out;
    if (sv.rows() && qv.rows()) out.emplace_back(sv, qv);
    if (st.rows() && qt.rows()) out.emplace_back(st, qt);
    return out;
  }
  [[nodiscard]] double mpmm(int u) const {
    std::vector<double> ds, dq;
    for (const auto& [s, q] : branches()) {
      const auto t = table(s, q);
      for (double x : row_mins(t)) ds.push_back(x);
      for (double x : row_mins(transpose(t))) dq.push_back(x);
    }
    auto top = [u](std::vector<double> v) {
      std::sort(v.begin(), v.end(), std::greater<>());
      double acc = 0;
      for (std::size_t i = 0; i < v.size() && i < static_cast<std::size_t>(u); ++i) acc += v[i];
      return acc;
    };
    return (top(ds) + top(dq)) / u;
  }
  [[nodiscard]] double bimhm() const {
    double total = 0;
    for (const auto& [s, q] : branches()) {
      const auto t = table(s, q);
      for (const auto& mins : {row_mins(t), row_mins(transpose(t))}) {
        double acc = 0;
        for (double x : mins) acc += x;
        total += acc / static_cast<double>(mins.size());
      }
    }
    return total;
  }
  [[nodiscard]] double hausdorff() const {
    double total = 0;
    for (const auto& [s, q] : branches()) {
      const auto t = table(s, q);
      auto a = row_mins(t), b = row_mins(transpose(t));
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      total += std::max(a.back(), b.back());
    }
    return total;
  }
};

/// Random record with a random placeholder layout.
inline archive::VideoRecord random_record(std::mt19937_64& rng, int max_dim = 8) {
  std::uniform_int_distribution<int> frames_d(1, 4), sp_d(1, 4), txt_d(0, 6), dim_d(1, max_dim);
  archive::VideoRecord r;
  r.layout.frames = frames_d(rng);
  r.layout.spatial_len = sp_d(rng);
  r.layout.text_len = txt_d(rng);
  const auto len = r.layout.length();
  std::vector<std::int64_t> all(static_cast<std::size_t>(len));
  for (std::int64_t i = 0; i < len; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(r.layout.frames * r.layout.spatial_len));
  std::sort(all.begin(), all.end());
  r.layout.image_indices = all;
  r.tokens = randn<float>(len, dim_d(rng), rng);
  r.id = "v" + std::to_string(rng() % 100000);
  r.label = "c";
  return r;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("fsar_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Generates a synthetic archive under a scratch directory and loads it.
inline engine::Dataset synth_dataset(const archive::SynthConfig& cfg, const std::string& name,
                                     engine::PromptFilter filter = engine::PromptFilter::automatic) {
  const auto dir = scratch(name);
  archive::synth_generate(cfg, dir);
  return engine::load_dataset(dir, filter);
}

/// Small archive for gradient and sampling tests.
inline archive::SynthConfig tiny_synth(std::uint64_t seed = 0) {
  archive::SynthConfig c;
  c.classes = 5;
  c.per_class = 4;
  c.frames = 3;
  c.spatial_len = 2;
  c.text_len = 3;
  c.dim = 6;
  c.signal_rank = 2;
  c.nuisance_rank = 2;
  c.prefix_len = 1;
  c.seed = seed;
  return c;
}

/// Head variables rebuilt from leaves listed in `HeadParams::for_each` order.
inline engine::HeadVars head_vars(const std::vector<ad::Var<double>>& v, int heads) {
  engine::HeadVars w;
  w.mfm.down_w = v[0];
  w.mfm.down_b = v[1];
  AttentionVars<double>* blocks[] = {&w.mfm.spatial, &w.mfm.temporal, &w.mfm.visual_cross, &w.mfm.textual_cross};
  for (int b = 0; b < 4; ++b) {
    const auto* x = &v[static_cast<std::size_t>(2 + 8 * b)];
    // for_each order: wq bq wk bk wv bv wo bo
    *blocks[b] = {x[0], x[2], x[4], x[6], x[1], x[3], x[5], x[7], heads};
  }
  w.alpha = v[34];
  return w;
}

/// Worst relative error of episode-loss gradients over every head tensor.
inline double head_grad_error(const engine::Head& head, const engine::Dataset& ds, const engine::EpisodeSpec& ep,
                              const engine::RunConfig& cfg) {
  std::vector<MatD> in;
  head.for_each([&](const std::string&, const MatD& m) { in.push_back(m); });
  const int heads = head.mfm.spatial.heads;
  return grad_error(
      [&](ad::Tape<double>& tape, const std::vector<ad::Var<double>>& v) {
        return engine::episode_loss(engine::forward_episode(tape, head_vars(v, heads), ds, ep, cfg), ep);
      },
      in);
}

/// Training-free configuration: identity projection, enhancement and
/// refinement off, fixed mixing weight.
inline engine::RunConfig frozen(model::Metric metric, model::Branch branch, int dim) {
  engine::RunConfig c;
  c.metric = metric;
  c.branch = branch;
  c.init = engine::InitKind::identity;
  c.dprime = dim;
  c.mfm = {false, false, false};
  c.ctpcm = {false, false};
  c.alpha_mode = model::AlphaMode::fixed;
  return c;
}

inline double frozen_accuracy(const engine::Dataset& ds, model::Metric metric, model::Branch branch, int episodes,
                              std::uint64_t seed = 0) {
  auto cfg = frozen(metric, branch, ds.dim());
  const auto head = engine::initial_head(cfg, ds.dim(), ds.known_prompts);
  return engine::evaluate(cfg, ds, head, archive::Split::test, episodes, seed).accuracy;
}

}  // namespace fsar::testing

#endif  // FSAR_TESTS_SUPPORT_HPP
