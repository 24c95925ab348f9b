#include "fsar/engine/episode.hpp"

#include <random>

namespace fsar::engine {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

/// First `k` entries of a uniform random permutation of `items`.
template <typename T>
std::vector<T> choose(std::vector<T> items, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  return items;
}

}  // namespace

EpisodeSpec sample_episode(const Dataset& ds, Split split, int ways, int shots, int queries_per_class,
                           std::uint64_t seed) {
  if (ways < 1 || shots < 1) throw DomainError("sample_episode: ways and shots must be positive");
  if (queries_per_class < 0) queries_per_class = shots;
  if (queries_per_class < 1) throw DomainError("sample_episode: at least one query per class is required");
  const auto it = ds.classes.find(split);
  const std::size_t available = it == ds.classes.end() ? 0 : it->second.size();
  if (available < static_cast<std::size_t>(ways)) {
    throw DomainError("sample_episode: " + archive::to_string(split) + " split has " + std::to_string(available) +
                      " classes, " + std::to_string(ways) + "-way episodes need " + std::to_string(ways));
  }
  const auto need = static_cast<std::size_t>(shots + queries_per_class);
  for (const auto& c : it->second) {
    const auto n = ds.by_class.at(c).size();
    if (n < need) {
      throw DomainError("sample_episode: class " + c + " has " + std::to_string(n) + " videos, " +
                        std::to_string(shots) + "-shot episodes with " + std::to_string(queries_per_class) +
                        " queries per class need " + std::to_string(need));
    }
  }

  std::mt19937_64 rng(mix_seed(seed));
  EpisodeSpec ep;
  ep.ways = ways;
  ep.shots = shots;
  ep.queries_per_class = queries_per_class;
  ep.seed = seed;
  ep.classes = choose(it->second, static_cast<std::size_t>(ways), rng);
  ep.support.resize(static_cast<std::size_t>(ways));
  for (int n = 0; n < ways; ++n) {
    const auto picked = choose(ds.by_class.at(ep.classes[static_cast<std::size_t>(n)]), need, rng);
    ep.support[static_cast<std::size_t>(n)].assign(picked.begin(), picked.begin() + shots);
    for (std::size_t q = static_cast<std::size_t>(shots); q < need; ++q) {
      ep.queries.push_back(picked[q]);
      ep.query_labels.push_back(n);
    }
  }
  return ep;
}

}  // namespace fsar::engine
