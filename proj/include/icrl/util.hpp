#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "icrl/errors.hpp"

namespace icrl {

// Deterministic float-to-text used by every CSV/report writer: %.17g always
// round-trips a double exactly and produces identical bytes for identical
// values, which the rerun-reproducibility contract depends on.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Shorter rendering for human-facing summaries (still deterministic).
inline std::string format_double_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

// FNV-1a over bytes; used for config hashing in stage manifests.
inline std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Minimal CSV writer: caller supplies header once, then rows.  Values are
// joined with commas; fields containing commas are not expected and throw.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& fields);
  const std::string& text() const { return text_; }
  void save(const std::string& path) const;

 private:
  std::size_t width_;
  std::string text_;
};

}  // namespace icrl
