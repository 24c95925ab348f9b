#include "fsar/archive/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace fsar::archive {

namespace {

using Vec = Eigen::VectorXd;

Vec gaussian(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

Vec unit(std::mt19937_64& rng, Eigen::Index n) {
  Vec v = gaussian(rng, n);
  return v / v.norm();
}

std::string padded(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

}  // namespace

int SynthConfig::split_classes(Split s) const {
  const int over = s == Split::train ? train_classes : s == Split::val ? val_classes : test_classes;
  return over > 0 ? over : classes;
}

ArchiveManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.classes <= 0 || cfg.per_class <= 0 || cfg.frames <= 0 || cfg.spatial_len <= 0 || cfg.dim <= 0) {
    throw DomainError("synth: counts must be positive");
  }
  if (cfg.text_len < 0 || cfg.known_extra < 0 || cfg.prefix_len < 0) throw DomainError("synth: negative length");
  if (cfg.sigma < 0) throw DomainError("synth: sigma must be nonnegative");
  if (cfg.beta < 0 || cfg.beta > 1 || cfg.gamma < 0 || cfg.gamma > 1) {
    throw DomainError("synth: informativeness must lie in [0, 1]");
  }
  if (cfg.signal_rank < 1 || cfg.nuisance_rank < 0 || cfg.signal_rank + cfg.nuisance_rank > cfg.dim) {
    throw DomainError("synth: signal rank >= 1, nuisance rank >= 0 and their sum <= dim required");
  }
  if (cfg.template_scale < 0 || cfg.nuisance_scale < 0 || cfg.clutter < 0 || cfg.drift < 0) throw DomainError("synth: scales must be nonnegative");

  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index d = cfg.dim;
  const double noise_scale = cfg.sigma / std::sqrt(static_cast<double>(d));

  // Signal and nuisance subspaces are orthogonal slices of one random basis.
  const int rank = cfg.signal_rank + cfg.nuisance_rank;
  Eigen::MatrixXd raw(d, rank);
  for (Eigen::Index c = 0; c < raw.cols(); ++c) raw.col(c) = gaussian(rng, d);
  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() * Eigen::MatrixXd::Identity(d, rank);
  const Eigen::MatrixXd signal_basis = basis.leftCols(cfg.signal_rank);
  const Eigen::MatrixXd nuisance_basis = basis.rightCols(cfg.nuisance_rank);
  auto signal_direction = [&]() -> Vec { return signal_basis * unit(rng, cfg.signal_rank); };
  auto nuisance = [&]() -> Vec {
    if (cfg.nuisance_rank == 0) return Vec::Zero(d);
    return nuisance_basis * gaussian(rng, cfg.nuisance_rank) / std::sqrt(static_cast<double>(cfg.nuisance_rank));
  };
  const Vec visual_template = cfg.nuisance_rank > 0 ? Vec(nuisance_basis * unit(rng, cfg.nuisance_rank)) : Vec::Zero(d);
  const Vec textual_template = cfg.nuisance_rank > 0 ? Vec(nuisance_basis * unit(rng, cfg.nuisance_rank)) : Vec::Zero(d);

  ArchiveManifest m;
  m.root = dir;
  m.dim = cfg.dim;
  const int prefix = std::min(cfg.prefix_len, cfg.text_len);
  const int n_vis = cfg.frames * cfg.spatial_len;

  const double vis_nuisance = cfg.sigma * (cfg.nuisance_scale + cfg.clutter * (1.0 - cfg.gamma));
  const double txt_nuisance = cfg.sigma * (cfg.nuisance_scale + cfg.clutter * (1.0 - cfg.beta));

  int global_class = 0;
  for (Split split : {Split::train, Split::val, Split::test}) {
    auto& inventory = m.classes[split];
    for (int c = 0; c < cfg.split_classes(split); ++c, ++global_class) {
      const std::string label = "class_" + padded(global_class, 3);
      inventory.push_back(label);
      const Vec text_mean = signal_direction();
      const Vec vis_mean = signal_direction();
      const Vec vis_drift = signal_direction();

      for (int v = 0; v < cfg.per_class; ++v) {
        const Vec vis_off = (1.0 - cfg.gamma) * cfg.template_scale * visual_template + vis_nuisance * nuisance();
        const Vec txt_off = (1.0 - cfg.beta) * cfg.template_scale * textual_template + txt_nuisance * nuisance();
        Eigen::MatrixXd visual(n_vis, d);
        for (int f = 0; f < cfg.frames; ++f) {
          const double phase = cfg.frames > 1 ? 2.0 * f / (cfg.frames - 1) - 1.0 : 0.0;
          Vec signal = vis_mean + cfg.drift * phase * vis_drift;
          signal /= signal.norm();
          for (int s = 0; s < cfg.spatial_len; ++s) {
            visual.row(f * cfg.spatial_len + s) = (cfg.gamma * signal + vis_off + noise_scale * gaussian(rng, d)).transpose();
          }
        }
        Eigen::MatrixXd textual(cfg.text_len, d);
        for (int t = 0; t < cfg.text_len; ++t) {
          textual.row(t) = (cfg.beta * text_mean + txt_off + noise_scale * gaussian(rng, d)).transpose();
        }
        Eigen::MatrixXd extra(cfg.known_prompts ? cfg.known_extra : 0, d);
        for (Eigen::Index t = 0; t < extra.rows(); ++t) {
          extra.row(t) = (cfg.template_scale * textual_template + cfg.sigma * cfg.nuisance_scale * nuisance() +
                          noise_scale * gaussian(rng, d))
                             .transpose();
        }

        auto emit = [&](PromptMode mode, const Eigen::MatrixXd& text) {
          VideoRecord r;
          r.id = to_string(split) + "-c" + padded(global_class, 3) + "-v" + padded(v, 3);
          r.label = label;
          r.split = split;
          r.prompt_mode = mode;
          r.layer = -1;
          r.model = "synthetic";
          r.layout.frames = cfg.frames;
          r.layout.spatial_len = cfg.spatial_len;
          r.layout.text_len = static_cast<int>(text.rows());
          for (int i = 0; i < n_vis; ++i) r.layout.image_indices.push_back(prefix + i);
          DecoupledTokens<float> parts;
          parts.frames = cfg.frames;
          parts.spatial_len = cfg.spatial_len;
          parts.visual = visual.cast<float>();
          parts.textual = text.cast<float>();
          r.tokens = fuse(parts, r.layout.image_indices, r.layout.length());
          add_record(m, r);
        };

        if (!cfg.known_prompts) {
          emit(PromptMode::unknown, textual);
        } else {
          emit(PromptMode::known_support, textual);
          Eigen::MatrixXd longer(textual.rows() + extra.rows(), d);
          longer << textual, extra;
          emit(PromptMode::known_query, longer);
        }
      }
    }
  }
  write_manifest(m);
  return m;
}

}  // namespace fsar::archive
