#ifndef FSAR_ENGINE_PIPELINE_HPP
#define FSAR_ENGINE_PIPELINE_HPP

#include "fsar/engine/config.hpp"
#include "fsar/engine/episode.hpp"
#include "fsar/model/head.hpp"

#include <random>

namespace fsar::engine {

using Head = model::HeadParams<Real>;

struct HeadVars {
  model::MfmVars<Real> mfm;
  ad::Var<Real> alpha;
};

HeadVars bind(ad::Tape<Real>& tape, const Head& head, bool trainable);

/// Fresh head for input width `in_dim`. Identity init requires dprime == in_dim
/// and gives an identity projection with random attention.
Head initial_head(const RunConfig& cfg, int in_dim, bool known_prompts);

/// Conditions met while running an episode that the report should mention.
struct EpisodeNotes {
  bool cross_skipped = false;   // visual-lead cross-attention had no textual keys
  bool textual_missing = false; // adaptive gate fell back to the visual-only value
  bool u_clamped = false;       // u exceeded a distance vector length
};

struct EpisodeOutput {
  ad::Var<Real> logits;       // B_Q x N, negative distances
  Mat<Real> distances;        // B_Q x N
  Mat<Real> probabilities;    // row-wise softmax of the logits
  double alpha = 0;           // mixing weight used by the prototype refinement
  double gate_visual = 0;     // adaptive gate statistics (adaptive mode only)
  double gate_textual = 0;
  EpisodeNotes notes;
};

/// Decouple, project, enhance, build and refine prototypes, then score every
/// (query, class) pair. Records onto `tape`.
EpisodeOutput forward_episode(ad::Tape<Real>& tape, const HeadVars& vars, const Dataset& ds, const EpisodeSpec& ep,
                              const RunConfig& cfg);

/// Value-only forward pass.
EpisodeOutput forward_episode(const Head& head, const Dataset& ds, const EpisodeSpec& ep, const RunConfig& cfg);

/// Mean negative log-probability of the true classes; probabilities under
/// 1e-12 are clamped and counted in `clamped`.
ad::Var<Real> episode_loss(const EpisodeOutput& out, const EpisodeSpec& ep, int* clamped = nullptr);

/// Fraction of queries whose highest-probability class is their own.
double episode_accuracy(const EpisodeOutput& out, const EpisodeSpec& ep);

}  // namespace fsar::engine

#endif  // FSAR_ENGINE_PIPELINE_HPP
