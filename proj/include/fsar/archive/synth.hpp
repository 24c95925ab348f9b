#ifndef FSAR_ARCHIVE_SYNTH_HPP
#define FSAR_ARCHIVE_SYNTH_HPP

#include "fsar/archive/archive.hpp"

#include <cstdint>
#include <filesystem>

namespace fsar::archive {

/// Parameters of the synthetic token generator.
///
/// Each class owns a unit mean direction per branch inside a low-rank signal
/// subspace. A token of a branch with informativeness `info` is
///   info * class_signal + (1 - info) * template_scale * template
///     + sigma * (nuisance_scale + clutter * (1 - info)) * nu + noise
/// where `template` is a fixed unit vector per branch shared by every video,
/// `nu` is drawn once per video and branch inside a nuisance subspace
/// orthogonal to the signal, and noise is isotropic with expected norm sigma.
/// Visual class signal drifts along a per-class direction across frames.
struct SynthConfig {
  int classes = 10;        // per split unless overridden below
  int train_classes = 0;   // 0 -> classes
  int val_classes = 0;
  int test_classes = 0;
  int per_class = 12;
  int frames = 8;
  int spatial_len = 4;
  int text_len = 8;
  int dim = 64;
  double beta = 0.7;   // textual informativeness
  double gamma = 0.7;  // visual informativeness
  double sigma = 0.5;
  std::uint64_t seed = 0;
  int signal_rank = 8;
  int nuisance_rank = 8;
  double template_scale = 4.0;
  double nuisance_scale = 1.0;
  double clutter = 2.0;
  double drift = 1.0;
  bool known_prompts = false;  // emit known-support and known-query records
  int known_extra = 4;         // extra textual tokens on known-query records
  int prefix_len = 2;          // textual tokens before the first placeholder

  [[nodiscard]] int split_classes(Split s) const;
};

/// Writes a complete archive under `dir` (created if missing) and returns its
/// manifest. Output is byte-identical for identical configs.
ArchiveManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace fsar::archive

#endif  // FSAR_ARCHIVE_SYNTH_HPP
