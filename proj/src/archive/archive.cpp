#include "fsar/archive/archive.hpp"

#include "fsar/archive/tensor_file.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace fsar::archive {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json entry_to_json(const VideoEntry& e) {
  return json{{"id", e.id},
              {"label", e.label},
              {"split", to_string(e.split)},
              {"prompt_mode", to_string(e.prompt_mode)},
              {"file", e.file},
              {"frames", e.layout.frames},
              {"spatial_len", e.layout.spatial_len},
              {"text_len", e.layout.text_len},
              {"length", e.layout.length()},
              {"image_indices", e.layout.image_indices},
              {"layer", e.layer},
              {"model", e.model}};
}

VideoEntry entry_from_json(const json& j) {
  VideoEntry e;
  e.id = j.at("id").get<std::string>();
  e.label = j.at("label").get<std::string>();
  e.split = parse_split(j.at("split").get<std::string>());
  e.prompt_mode = parse_prompt_mode(j.at("prompt_mode").get<std::string>());
  e.file = j.at("file").get<std::string>();
  e.layout.frames = j.at("frames").get<int>();
  e.layout.spatial_len = j.at("spatial_len").get<int>();
  e.layout.text_len = j.at("text_len").get<int>();
  e.layout.image_indices = j.at("image_indices").get<std::vector<std::int64_t>>();
  e.layer = j.value("layer", -1);
  e.model = j.value("model", std::string{});
  if (j.contains("length") && j.at("length").get<std::int64_t>() != e.layout.length()) {
    throw FormatError("manifest entry " + e.id + ": length disagrees with text_len + frames x spatial_len");
  }
  return e;
}

std::string file_name_for(const VideoRecord& r) {
  std::string mode = to_string(r.prompt_mode);
  return "tensors/" + r.id + "." + mode + ".fstk";
}

}  // namespace

bool ArchiveManifest::has_known_prompts() const {
  for (const auto& v : videos)
    if (v.prompt_mode != PromptMode::unknown) return true;
  return false;
}

ArchiveManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  ArchiveManifest m;
  m.root = dir;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw FormatError(path.string() + ": unsupported manifest version " + std::to_string(m.version));
    }
    m.dim = j.at("dim").get<int>();
    for (const auto& [split, names] : j.at("classes").items())
      m.classes[parse_split(split)] = names.get<std::vector<std::string>>();
    for (const auto& v : j.at("videos")) m.videos.push_back(entry_from_json(v));
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  return m;
}

void write_manifest(const ArchiveManifest& m) {
  json classes = json::object();
  for (const auto& [split, names] : m.classes) classes[to_string(split)] = names;
  json videos = json::array();
  for (const auto& v : m.videos) videos.push_back(entry_to_json(v));
  const json j{{"format", "fsar-token-archive"},
               {"version", m.version},
               {"dim", m.dim},
               {"classes", classes},
               {"videos", videos}};
  fs::create_directories(m.root);
  const fs::path path = m.root / kManifestName;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void add_record(ArchiveManifest& m, const VideoRecord& r) {
  if (m.dim == 0) m.dim = static_cast<int>(r.tokens.cols());
  if (r.tokens.cols() != m.dim) throw FormatError("record " + r.id + ": width differs from archive dim");
  if (r.tokens.rows() != r.layout.length()) throw FormatError("record " + r.id + ": row count != layout length");
  VideoEntry e{r.id, r.label, r.split, r.prompt_mode, file_name_for(r), r.layout, r.layer, r.model};
  write_tensor(m.root / e.file, Tensor::from_matrix(r.tokens));
  m.videos.push_back(std::move(e));
}

VideoRecord read_record(const ArchiveManifest& m, const VideoEntry& e) {
  const Tensor t = read_tensor(m.root / e.file);
  if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint64_t>(e.layout.length()) ||
      t.shape[1] != static_cast<std::uint64_t>(m.dim)) {
    throw FormatError(e.file + ": tensor shape does not match manifest entry");
  }
  VideoRecord r;
  r.id = e.id;
  r.label = e.label;
  r.split = e.split;
  r.prompt_mode = e.prompt_mode;
  r.tokens = t.to_matrix();
  r.layout = e.layout;
  r.layer = e.layer;
  r.model = e.model;
  return r;
}

std::vector<std::string> validate(const fs::path& dir) {
  std::vector<std::string> out;
  ArchiveManifest m;
  try {
    m = load_manifest(dir);
  } catch (const FormatError& ex) {
    out.emplace_back(ex.what());
    return out;
  }
  if (m.dim <= 0) out.push_back("manifest: dim must be positive");

  const std::vector<Split> splits{Split::train, Split::val, Split::test};
  for (std::size_t a = 0; a < splits.size(); ++a) {
    for (std::size_t b = a + 1; b < splits.size(); ++b) {
      if (!m.classes.count(splits[a]) || !m.classes.count(splits[b])) continue;
      const auto& ca = m.classes.at(splits[a]);
      const std::set<std::string> cb(m.classes.at(splits[b]).begin(), m.classes.at(splits[b]).end());
      for (const auto& c : ca) {
        if (cb.count(c)) {
          out.push_back("class '" + c + "' appears in both " + to_string(splits[a]) + " and " +
                        to_string(splits[b]) + " splits");
        }
      }
    }
  }

  std::set<std::pair<std::string, PromptMode>> seen;
  for (const auto& e : m.videos) {
    const std::string who = "video " + e.id + " (" + e.file + ")";
    if (!seen.insert({e.id, e.prompt_mode}).second) out.push_back(who + ": duplicate id/prompt mode");
    for (const auto& v : e.layout.violations()) out.push_back(who + ": " + v);
    const auto inv = m.classes.find(e.split);
    if (inv == m.classes.end() ||
        std::find(inv->second.begin(), inv->second.end(), e.label) == inv->second.end()) {
      out.push_back(who + ": label '" + e.label + "' missing from the " + to_string(e.split) + " inventory");
    }
    const fs::path path = m.root / e.file;
    if (!fs::exists(path)) {
      out.push_back("file " + e.file + ": missing");
      continue;
    }
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_bytes(path);
    } catch (const IoError& ex) {
      out.push_back("file " + e.file + ": " + ex.what());
      continue;
    }
    TensorHeader h;
    try {
      h = decode_header(bytes, e.file);
    } catch (const FormatError& ex) {
      out.push_back("file " + e.file + ": " + ex.what());
      continue;
    }
    const std::vector<std::uint64_t> want{static_cast<std::uint64_t>(e.layout.length()),
                                          static_cast<std::uint64_t>(m.dim)};
    if (h.shape != want) {
      out.push_back("file " + e.file + ": header shape does not match manifest entry");
      continue;
    }
    const std::uint64_t expected = h.header_bytes + 4 * want[0] * want[1];
    if (bytes.size() != expected) {
      out.push_back("file " + e.file + ": size " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected) + (bytes.size() < expected ? " (truncated)" : " (trailing bytes)"));
      continue;
    }
    const Tensor t = decode_tensor(bytes, e.file);
    for (float f : t.data) {
      if (!std::isfinite(f)) {
        out.push_back("file " + e.file + ": non-finite token value");
        break;
      }
    }
  }
  return out;
}

}  // namespace fsar::archive
