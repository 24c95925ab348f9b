#ifndef FSAR_ENGINE_RUNNER_HPP
#define FSAR_ENGINE_RUNNER_HPP

#include "fsar/engine/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fsar::engine {

struct EpisodeRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  double accuracy = 0;
  double alpha = 0;
  double gate_visual = 0;
  double gate_textual = 0;
};

struct ValidationPoint {
  int episode = 0;  // training episodes completed
  double accuracy = 0;
  double mean_loss = 0;  // mean training loss since the previous point
};

struct RunReport {
  std::string split;
  double accuracy = 0;
  double ci95 = 0;  // 1.96 x standard error over episodes
  std::vector<EpisodeRecord> episodes;
  nlohmann::json config;
  std::vector<std::string> notes;
  int clamped_queries = 0;
  std::size_t param_count = 0;
  std::vector<ValidationPoint> validation;  // training runs only
  int best_episode = -1;
  double wall_clock_seconds = 0;
};

/// Report as JSON. `with_wall_clock = false` drops the only nondeterministic field.
nlohmann::json to_json(const RunReport& r, bool with_wall_clock = true);
RunReport report_from_json(const nlohmann::json& j);
/// Aligned plain-text rendering.
std::string render_table(const RunReport& r);
/// Mean and 1.96 x stderr of a sample (0 half-width for fewer than two values).
std::pair<double, double> mean_ci95(const std::vector<double>& xs);

/// Mean accuracy over `episodes` seeded episodes of `split`; episodes run in
/// parallel and are reduced in index order.
RunReport evaluate(const RunConfig& cfg, const Dataset& ds, const Head& head, Split split, int episodes,
                   std::uint64_t seed);

/// Evaluates on `cfg.eval_split` with `cfg.eval_episodes` under `cfg.seed`.
RunReport evaluate(const RunConfig& cfg, const Dataset& ds, const Head& head);

struct TrainResult {
  Head head;         // best-on-validation parameters
  Head last;         // parameters after the final step
  RunReport report;  // validation history; accuracy is the best validation accuracy
};

/// One Adam step per training episode, validating every `val_every` episodes
/// and after the last one.
TrainResult train(const RunConfig& cfg, const Dataset& ds, const Head& init);
TrainResult train(const RunConfig& cfg, const Dataset& ds);

/// Seed streams of a run.
std::uint64_t train_stream(std::uint64_t seed);
std::uint64_t val_stream(std::uint64_t seed);

/// Named-tensor checkpoint: "FSCK", u32 version, u32 count, then per tensor a
/// u32 name length, the name bytes and one tensor in the archive tensor layout
/// (f32 payload). The attention head count travels as the tensor "meta.heads".
void save_checkpoint(const std::filesystem::path& path, const Head& head);
Head load_checkpoint(const std::filesystem::path& path);

}  // namespace fsar::engine

#endif  // FSAR_ENGINE_RUNNER_HPP
