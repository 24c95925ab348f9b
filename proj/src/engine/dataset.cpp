#include "fsar/engine/dataset.hpp"

#include <set>

namespace fsar::engine {

std::string to_string(PromptFilter f) {
  switch (f) {
    case PromptFilter::automatic: return "auto";
    case PromptFilter::unknown: return "unknown";
    case PromptFilter::known: return "known";
  }
  return "?";
}

PromptFilter parse_prompt_filter(const std::string& s) {
  if (s == "auto") return PromptFilter::automatic;
  if (s == "unknown") return PromptFilter::unknown;
  if (s == "known") return PromptFilter::known;
  throw DomainError("unknown prompt filter '" + s + "' (expected auto, unknown or known)");
}

Dataset dataset_from_records(const std::vector<archive::VideoRecord>& records, PromptFilter filter) {
  bool has_known = false, has_unknown = false;
  for (const auto& r : records) (r.prompt_mode == PromptMode::unknown ? has_unknown : has_known) = true;
  if (filter == PromptFilter::automatic) filter = has_known ? PromptFilter::known : PromptFilter::unknown;
  if (filter == PromptFilter::known && !has_known) throw DomainError("archive has no known-prompt records");
  if (filter == PromptFilter::unknown && !has_unknown) throw DomainError("archive has no unknown-prompt records");

  Dataset ds;
  ds.known_prompts = filter == PromptFilter::known;
  std::map<std::string, std::size_t> slot;
  std::map<std::string, std::pair<bool, bool>> filled;
  for (const auto& r : records) {
    const bool wanted = ds.known_prompts ? r.prompt_mode != PromptMode::unknown : r.prompt_mode == PromptMode::unknown;
    if (!wanted) continue;
    auto [it, fresh] = slot.emplace(r.id, ds.videos.size());
    if (fresh) {
      Video v;
      v.id = r.id;
      v.label = r.label;
      v.split = r.split;
      ds.videos.push_back(std::move(v));
      ds.by_class[r.label].push_back(it->second);
    }
    Video& v = ds.videos[it->second];
    if (ds.manifest.dim == 0) ds.manifest.dim = static_cast<int>(r.tokens.cols());
    if (v.label != r.label || v.split != r.split) throw FormatError("video " + r.id + ": records disagree on label or split");
    const auto tokens = archive::decouple(r);
    archive::DecoupledTokens<Real> dt;
    dt.visual = tokens.visual.cast<Real>();
    dt.textual = tokens.textual.cast<Real>();
    dt.frames = tokens.frames;
    dt.spatial_len = tokens.spatial_len;
    auto& f = filled[r.id];
    if (r.prompt_mode == PromptMode::unknown) {
      v.as_support = dt;
      v.as_query = dt;
      f = {true, true};
    } else if (r.prompt_mode == PromptMode::known_support) {
      v.as_support = dt;
      f.first = true;
    } else {
      v.as_query = dt;
      f.second = true;
    }
  }
  for (const auto& [id, f] : filled) {
    if (!f.first || !f.second) throw FormatError("video " + id + ": missing its known-support or known-query record");
  }
  std::set<std::string> seen;
  for (const auto& v : ds.videos) {
    if (seen.insert(v.label).second) ds.classes[v.split].push_back(v.label);
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir, PromptFilter filter) {
  const auto manifest = archive::load_manifest(dir);
  std::vector<archive::VideoRecord> records;
  records.reserve(manifest.videos.size());
  for (const auto& e : manifest.videos) records.push_back(archive::read_record(manifest, e));
  Dataset ds = dataset_from_records(records, filter);
  ds.manifest = manifest;
  return ds;
}

}  // namespace fsar::engine
