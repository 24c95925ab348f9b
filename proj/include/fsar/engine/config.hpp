#ifndef FSAR_ENGINE_CONFIG_HPP
#define FSAR_ENGINE_CONFIG_HPP

#include "fsar/engine/dataset.hpp"
#include "fsar/model/ctpcm.hpp"
#include "fsar/model/mfm.hpp"
#include "fsar/model/mpmm.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fsar::engine {

using model::AlphaMode;
using model::Branch;
using model::Metric;

enum class InitKind { random, identity };

std::string to_string(InitKind k);
InitKind parse_init(const std::string& s);

inline constexpr int kReferenceDprime = 256;
inline constexpr int kReferenceU = 10;
inline constexpr int kReferenceUSpatialFiveShot = 50;
inline constexpr double kReferenceAlphaUnknown = 0.1;
inline constexpr double kReferenceAlphaKnown = 0.9;

struct RunConfig {
  Metric metric = Metric::mpmm;
  Branch branch = Branch::both;
  model::MfmFlags mfm;
  model::CtpcmFlags ctpcm;
  AlphaMode alpha_mode = AlphaMode::learnable;
  std::optional<double> alpha;  // unset: 0.1 for unknown prompts, 0.9 for known
  int u = kReferenceU;
  int dprime = kReferenceDprime;
  int heads = 1;
  InitKind init = InitKind::random;

  int ways = 5;
  int shots = 1;
  int queries_per_class = -1;  // -1: same as shots
  int train_episodes = 2000;
  int eval_episodes = 1000;
  int val_every = 500;
  int val_episodes = 200;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  PromptFilter prompts = PromptFilter::automatic;
  Split eval_split = Split::test;

  /// Mixing weight used when none was given explicitly.
  [[nodiscard]] double alpha_for(bool known_prompts) const {
    return alpha.value_or(known_prompts ? kReferenceAlphaKnown : kReferenceAlphaUnknown);
  }
  /// Human-readable reasons the configuration is inconsistent; empty if fine.
  [[nodiscard]] std::vector<std::string> problems() const;
  /// Flags with the branch forcing applied (a dropped branch feeds no cross-attention).
  [[nodiscard]] model::MfmFlags effective_mfm() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);

}  // namespace fsar::engine

#endif  // FSAR_ENGINE_CONFIG_HPP
