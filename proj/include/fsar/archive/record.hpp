#ifndef FSAR_ARCHIVE_RECORD_HPP
#define FSAR_ARCHIVE_RECORD_HPP

#include "fsar/core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsar::archive {

enum class Split { train, val, test };
enum class PromptMode { unknown, known_support, known_query };

std::string to_string(Split s);
std::string to_string(PromptMode m);
Split parse_split(const std::string& s);
PromptMode parse_prompt_mode(const std::string& s);

/// Where the visual placeholders sit inside a fused token sequence.
struct TokenLayout {
  int frames = 0;
  int spatial_len = 0;
  int text_len = 0;
  /// Strictly increasing positions of visual tokens, frame-major then spatial.
  std::vector<std::int64_t> image_indices;

  [[nodiscard]] std::int64_t length() const {
    return static_cast<std::int64_t>(text_len) + static_cast<std::int64_t>(frames) * spatial_len;
  }
  /// Human-readable descriptions of every broken layout invariant.
  [[nodiscard]] std::vector<std::string> violations() const;
};

struct VideoRecord {
  std::string id;
  std::string label;
  Split split = Split::train;
  PromptMode prompt_mode = PromptMode::unknown;
  MatF tokens;  // L x D fused hidden states
  TokenLayout layout;
  int layer = -1;
  std::string model;
};

/// Visual rows (frames * spatial_len, frame-major) and textual rows of one video.
template <typename Scalar>
struct DecoupledTokens {
  Mat<Scalar> visual;
  Mat<Scalar> textual;
  int frames = 0;
  int spatial_len = 0;

  [[nodiscard]] auto frame(int f) const { return visual.middleRows(Eigen::Index(f) * spatial_len, spatial_len); }
};

namespace detail {
void check_indices(const std::vector<std::int64_t>& idx, std::int64_t length);
}

/// Splits fused tokens at the placeholder positions. Both outputs keep
/// ascending source order; no value is altered.
template <typename Scalar>
DecoupledTokens<Scalar> decouple(const Mat<Scalar>& fused, const std::vector<std::int64_t>& image_indices,
                                 int frames) {
  if (frames <= 0) throw FormatError("decouple: frame count must be positive");
  if (image_indices.size() % static_cast<std::size_t>(frames) != 0) {
    throw FormatError("decouple: " + std::to_string(image_indices.size()) +
                      " visual positions not divisible by " + std::to_string(frames) + " frames");
  }
  detail::check_indices(image_indices, fused.rows());
  DecoupledTokens<Scalar> out;
  out.frames = frames;
  out.spatial_len = static_cast<int>(image_indices.size() / static_cast<std::size_t>(frames));
  const auto n_vis = static_cast<Eigen::Index>(image_indices.size());
  out.visual.resize(n_vis, fused.cols());
  out.textual.resize(fused.rows() - n_vis, fused.cols());
  Eigen::Index v = 0, t = 0;
  for (Eigen::Index r = 0; r < fused.rows(); ++r) {
    if (v < n_vis && image_indices[static_cast<std::size_t>(v)] == r) {
      out.visual.row(v++) = fused.row(r);
    } else {
      out.textual.row(t++) = fused.row(r);
    }
  }
  return out;
}

/// Inverse of decouple: places visual rows at `image_indices`, textual rows elsewhere.
template <typename Scalar>
Mat<Scalar> fuse(const DecoupledTokens<Scalar>& tokens, const std::vector<std::int64_t>& image_indices,
                 std::int64_t length) {
  const auto n_vis = tokens.visual.rows();
  if (n_vis + tokens.textual.rows() != length) {
    throw FormatError("fuse: " + std::to_string(n_vis) + " visual + " + std::to_string(tokens.textual.rows()) +
                      " textual rows != length " + std::to_string(length));
  }
  if (static_cast<Eigen::Index>(image_indices.size()) != n_vis) {
    throw FormatError("fuse: placeholder count does not match visual rows");
  }
  detail::check_indices(image_indices, length);
  const auto width = n_vis > 0 ? tokens.visual.cols() : tokens.textual.cols();
  Mat<Scalar> out(length, width);
  Eigen::Index v = 0, t = 0;
  for (Eigen::Index r = 0; r < length; ++r) {
    if (v < n_vis && image_indices[static_cast<std::size_t>(v)] == r) {
      out.row(r) = tokens.visual.row(v++);
    } else {
      out.row(r) = tokens.textual.row(t++);
    }
  }
  return out;
}

inline DecoupledTokens<float> decouple(const VideoRecord& r) {
  return decouple(r.tokens, r.layout.image_indices, r.layout.frames);
}

}  // namespace fsar::archive

#endif  // FSAR_ARCHIVE_RECORD_HPP
