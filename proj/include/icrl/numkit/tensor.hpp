#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

#include "icrl/errors.hpp"

namespace icrl::numkit {

// All tensors in this library are dense 2-D double matrices; scalars are
// 1x1 and vectors are n x 1 or 1 x n as noted at each use site.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Named tensor collections.  std::map keeps iteration order deterministic,
// which matters for serialization and for reduction order in the optimizer.
using NamedTensors = std::map<std::string, Matrix>;
using GradMap = std::map<std::string, Matrix>;

// A set of learnable parameters keyed by name.
struct ParamStore {
  NamedTensors tensors;

  bool contains(const std::string& name) const {
    return tensors.find(name) != tensors.end();
  }

  const Matrix& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ContractError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  Matrix& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ContractError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  void insert(const std::string& name, Matrix value) {
    if (contains(name))
      throw ContractError("ParamStore: duplicate parameter '" + name + "'");
    tensors.emplace(name, std::move(value));
  }

  std::size_t size() const { return tensors.size(); }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
  }
};

inline void require(bool condition, const std::string& msg) {
  if (!condition) throw ContractError(msg);
}

inline void require_shape(const Matrix& m, Index rows, Index cols,
                          const std::string& what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeError(what + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " +
                     std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
}

inline void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw NumericsError(what + ": non-finite values");
}

// First index of the maximum entry; ties break toward the lowest index.
inline int argmax(const Vector& v) {
  require(v.size() > 0, "argmax: empty vector");
  int best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

// Numerically stable softmax of a vector (any orientation), result sums to 1.
inline Vector softmax(const Vector& logits) {
  require(logits.size() > 0, "softmax: empty vector");
  const Vector shifted = logits.array() - logits.maxCoeff();
  Vector out = shifted.array().exp();
  return out / out.sum();
}

}  // namespace icrl::numkit
