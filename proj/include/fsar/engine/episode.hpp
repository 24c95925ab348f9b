#ifndef FSAR_ENGINE_EPISODE_HPP
#define FSAR_ENGINE_EPISODE_HPP

#include "fsar/engine/dataset.hpp"

#include <cstdint>
#include <vector>

namespace fsar::engine {

/// One N-way K-shot task. Class n of the episode is `classes[n]`; its support
/// videos are `support[n]`. Queries are listed class by class.
struct EpisodeSpec {
  int ways = 0;
  int shots = 0;
  int queries_per_class = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> support;  // ways x shots video indices
  std::vector<std::size_t> queries;               // video indices
  std::vector<int> query_labels;                  // episode class index per query

  bool operator==(const EpisodeSpec&) const = default;
};

/// SplitMix64 finaliser; turns correlated seeds into independent streams.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed of episode `index` under a run seed.
inline std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

/// Uniform classes without replacement, then uniform videos per class without
/// replacement. `queries_per_class` < 0 means K.
EpisodeSpec sample_episode(const Dataset& ds, Split split, int ways, int shots, int queries_per_class,
                           std::uint64_t seed);

}  // namespace fsar::engine

#endif  // FSAR_ENGINE_EPISODE_HPP
