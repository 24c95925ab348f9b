#ifndef FSAR_ENGINE_DATASET_HPP
#define FSAR_ENGINE_DATASET_HPP

#include "fsar/archive/archive.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fsar::engine {

using Real = double;
using archive::PromptMode;
using archive::Split;

/// Which archive records feed the two episode roles.
enum class PromptFilter {
  automatic,  // known records when present, else unknown
  unknown,
  known,      // known-support for support roles, known-query for query roles
};

std::string to_string(PromptFilter f);
PromptFilter parse_prompt_filter(const std::string& s);

/// One video decoded into f64 branch tokens for each episode role.
struct Video {
  std::string id;
  std::string label;
  Split split = Split::train;
  archive::DecoupledTokens<Real> as_support;
  archive::DecoupledTokens<Real> as_query;
};

/// Archive contents held in memory, indexed by split and class.
struct Dataset {
  archive::ArchiveManifest manifest;
  std::vector<Video> videos;
  std::map<Split, std::vector<std::string>> classes;
  std::map<std::string, std::vector<std::size_t>> by_class;  // label -> video indices
  bool known_prompts = false;

  [[nodiscard]] int dim() const { return manifest.dim; }
};

Dataset load_dataset(const std::filesystem::path& dir, PromptFilter filter = PromptFilter::automatic);

/// Builds a dataset straight from in-memory records (tests, tooling).
Dataset dataset_from_records(const std::vector<archive::VideoRecord>& records, PromptFilter filter);

}  // namespace fsar::engine

#endif  // FSAR_ENGINE_DATASET_HPP
