#pragma once

#include <string>

#include "icrl/numkit/tensor.hpp"

namespace icrl::numkit {

// Binary checkpoint container.
//
// Layout (all integers little-endian):
//   magic   "ICKP" (4 bytes)
//   u32     format version (currently 1)
//   u32     metadata length, followed by that many UTF-8 bytes (JSON text)
//   u32     tensor count
//   per tensor:
//     u32   name length, followed by name bytes
//     u64   rows, u64 cols
//     f64   rows*cols values, row-major, little-endian
//
// Tensors are written in map order (lexicographic by name) so identical
// stores always serialize to identical bytes.  Loading validates the magic
// and version and throws FormatError on any truncation or mismatch.
struct Checkpoint {
  std::string metadata;  // JSON text; empty means "{}"
  ParamStore params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace icrl::numkit
