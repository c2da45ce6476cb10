#include "icrl/numkit/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace icrl::numkit {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

// This codebase only targets little-endian hosts; the writers below store
// raw bytes, and the static_assert documents the assumption.
static_assert(sizeof(double) == 8, "checkpoint format requires 64-bit doubles");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError(std::string("checkpoint: truncated ") + what);
  return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError(std::string("checkpoint: truncated ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open '" + path + "' for write");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  const std::string& meta = ckpt.metadata.empty() ? "{}" : ckpt.metadata;
  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, tensor] : ckpt.params.tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, static_cast<std::uint64_t>(tensor.rows()));
    write_u64(out, static_cast<std::uint64_t>(tensor.cols()));
    for (Index r = 0; r < tensor.rows(); ++r)
      for (Index c = 0; c < tensor.cols(); ++c) {
        const double v = tensor(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!out) throw FormatError("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version) + " in '" + path + "'");
  Checkpoint ckpt;
  const std::uint32_t meta_len = read_u32(in, "metadata length");
  ckpt.metadata.resize(meta_len);
  in.read(ckpt.metadata.data(), meta_len);
  if (!in) throw FormatError("checkpoint: truncated metadata");
  const std::uint32_t count = read_u32(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, "tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FormatError("checkpoint: truncated tensor name");
    const std::uint64_t rows = read_u64(in, "tensor rows");
    const std::uint64_t cols = read_u64(in, "tensor cols");
    if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32))
      throw FormatError("checkpoint: implausible shape for '" + name + "'");
    Matrix tensor(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < tensor.rows(); ++r)
      for (Index c = 0; c < tensor.cols(); ++c) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw FormatError("checkpoint: truncated payload of '" + name + "'");
        tensor(r, c) = v;
      }
    ckpt.params.insert(name, std::move(tensor));
  }
  return ckpt;
}

}  // namespace icrl::numkit
