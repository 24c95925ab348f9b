#include "fsar/archive/record.hpp"

namespace fsar::archive {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::unknown: return "unknown";
    case PromptMode::known_support: return "known-support";
    case PromptMode::known_query: return "known-query";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "unknown") return PromptMode::unknown;
  if (s == "known-support") return PromptMode::known_support;
  if (s == "known-query") return PromptMode::known_query;
  throw FormatError("unknown prompt mode '" + s + "'");
}

std::vector<std::string> TokenLayout::violations() const {
  std::vector<std::string> out;
  if (frames <= 0) out.push_back("frames must be positive");
  if (spatial_len <= 0) out.push_back("spatial length must be positive");
  if (text_len < 0) out.push_back("text length must be nonnegative");
  const auto expected = static_cast<std::size_t>(frames > 0 && spatial_len > 0 ? frames * spatial_len : 0);
  if (image_indices.size() != expected) {
    out.push_back("|image_indices| = " + std::to_string(image_indices.size()) + " but frames x spatial = " +
                  std::to_string(expected));
  }
  const std::int64_t len = length();
  for (std::size_t i = 0; i < image_indices.size(); ++i) {
    const auto v = image_indices[i];
    if (v < 0 || v >= len) {
      out.push_back("image index " + std::to_string(v) + " outside [0, " + std::to_string(len) + ")");
      break;
    }
    if (i > 0 && v <= image_indices[i - 1]) {
      out.push_back("image indices not strictly increasing at position " + std::to_string(i));
      break;
    }
  }
  return out;
}

namespace detail {

void check_indices(const std::vector<std::int64_t>& idx, std::int64_t length) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= length) {
      throw FormatError("placeholder index " + std::to_string(idx[i]) + " out of range [0, " +
                        std::to_string(length) + ")");
    }
    if (i > 0 && idx[i] <= idx[i - 1]) throw FormatError("placeholder indices must be strictly increasing");
  }
}

}  // namespace detail
}  // namespace fsar::archive
