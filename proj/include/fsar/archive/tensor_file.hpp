#ifndef FSAR_ARCHIVE_TENSOR_FILE_HPP
#define FSAR_ARCHIVE_TENSOR_FILE_HPP

#include "fsar/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fsar::archive {

/// Row-major f32 tensor as stored on disk.
struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  [[nodiscard]] std::uint64_t numel() const;
  [[nodiscard]] bool operator==(const Tensor&) const = default;

  static Tensor from_matrix(const MatF& m);
  /// Views a rank-2 (or rank-1, as one row) tensor as a matrix.
  [[nodiscard]] MatF to_matrix() const;
};

struct TensorHeader {
  std::uint32_t version = 0;
  std::vector<std::uint64_t> shape;
  std::uint64_t header_bytes = 0;
};

inline constexpr char kTensorMagic[4] = {'F', 'S', 'T', 'K'};
inline constexpr std::uint32_t kTensorVersion = 1;

/// Layout: "FSTK", u32 LE version, u8 rank, rank x u64 LE dims, f32 LE payload.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

/// Parses just the header; throws FormatError naming `origin` on bad magic,
/// unsupported version or a short buffer.
TensorHeader decode_header(const std::vector<std::uint8_t>& bytes, const std::string& origin);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace fsar::archive

#endif  // FSAR_ARCHIVE_TENSOR_FILE_HPP
