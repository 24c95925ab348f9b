#ifndef FSAR_ARCHIVE_ARCHIVE_HPP
#define FSAR_ARCHIVE_ARCHIVE_HPP

#include "fsar/archive/record.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fsar::archive {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// One manifest row: everything about a record except its token payload.
struct VideoEntry {
  std::string id;
  std::string label;
  Split split = Split::train;
  PromptMode prompt_mode = PromptMode::unknown;
  std::string file;  // relative to the archive root
  TokenLayout layout;
  int layer = -1;
  std::string model;
};

/// Directory archive: manifest.json plus one FSTK tensor per record.
struct ArchiveManifest {
  int version = kManifestVersion;
  int dim = 0;
  std::map<Split, std::vector<std::string>> classes;
  std::vector<VideoEntry> videos;
  std::filesystem::path root;

  /// True when any record was extracted with a label-conditioned prompt.
  [[nodiscard]] bool has_known_prompts() const;
};

ArchiveManifest load_manifest(const std::filesystem::path& dir);
void write_manifest(const ArchiveManifest& m);

/// Writes the record's tensor under `m.root` and appends its entry to `m`.
void add_record(ArchiveManifest& m, const VideoRecord& r);
VideoRecord read_record(const ArchiveManifest& m, const VideoEntry& e);

/// Every broken archive invariant, each naming the offending class or file.
/// Throws IoError when the manifest itself cannot be read.
std::vector<std::string> validate(const std::filesystem::path& dir);

}  // namespace fsar::archive

#endif  // FSAR_ARCHIVE_ARCHIVE_HPP
