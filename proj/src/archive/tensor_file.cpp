#include "fsar/archive/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fsar::archive {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t Tensor::numel() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor Tensor::from_matrix(const MatF& m) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

MatF Tensor::to_matrix() const {
  Eigen::Index rows = 0, cols = 0;
  if (shape.size() == 2) {
    rows = static_cast<Eigen::Index>(shape[0]);
    cols = static_cast<Eigen::Index>(shape[1]);
  } else if (shape.size() == 1) {
    rows = 1;
    cols = static_cast<Eigen::Index>(shape[0]);
  } else {
    throw FormatError("tensor: rank " + std::to_string(shape.size()) + " cannot be viewed as a matrix");
  }
  if (static_cast<std::uint64_t>(rows * cols) != data.size()) throw FormatError("tensor: payload/shape mismatch");
  MatF m(rows, cols);
  if (!data.empty()) std::memcpy(m.data(), data.data(), data.size() * sizeof(float));
  return m;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.shape.size() > 255) throw FormatError("tensor: rank exceeds 255");
  if (t.numel() != t.data.size()) throw FormatError("tensor: payload/shape mismatch");
  std::vector<std::uint8_t> out;
  out.reserve(9 + 8 * t.shape.size() + 4 * t.data.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  put_u32(out, kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) put_u64(out, d);
  for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

TensorHeader decode_header(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 9) throw FormatError(origin + ": truncated tensor header");
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw FormatError(origin + ": bad magic (expected FSTK)");
  TensorHeader h;
  h.version = get_u32(bytes.data() + 4);
  if (h.version != kTensorVersion) {
    throw FormatError(origin + ": unsupported tensor version " + std::to_string(h.version));
  }
  const std::size_t rank = bytes[8];
  h.header_bytes = 9 + 8 * rank;
  if (bytes.size() < h.header_bytes) throw FormatError(origin + ": truncated tensor header");
  for (std::size_t i = 0; i < rank; ++i) h.shape.push_back(get_u64(bytes.data() + 9 + 8 * i));
  return h;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  const TensorHeader h = decode_header(bytes, origin);
  Tensor t;
  t.shape = h.shape;
  const std::uint64_t n = t.numel();
  const std::uint64_t expected = h.header_bytes + 4 * n;
  if (bytes.size() != expected) {
    throw FormatError(origin + ": payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
  }
  t.data.resize(n);
  const std::uint8_t* p = bytes.data() + h.header_bytes;
  for (std::uint64_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return t;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode_tensor(t)); }

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_bytes(path), path.string()); }

}  // namespace fsar::archive
