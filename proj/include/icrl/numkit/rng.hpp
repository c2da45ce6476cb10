#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace icrl::numkit {

// Deterministic splittable RNG.  Every consumer derives its own stream from
// (master_seed, purpose_label, index), so adding a new consumer never shifts
// the draws seen by existing ones.  The core generator is splitmix64; all
// distributions are built on top of it in-house so that sequences are stable
// across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Stream derivation: hash the label and index into the master seed.
  static Rng derive(std::uint64_t master_seed, std::string_view label,
                    std::uint64_t index = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).  Requires n > 0.
  int uniform_int(int n);

  // Standard normal via Box-Muller (both values used, cached).
  double normal();
  double normal(double mean, double stddev);

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  // Dirichlet(1, ..., 1): normalized unit exponentials.
  Eigen::VectorXd dirichlet_uniform(Eigen::Index n);

  // Sample an index from a probability vector (entries >= 0, sum ~ 1).
  int categorical(const Eigen::VectorXd& probs);

  // Fisher-Yates shuffle of [0, n) indices.
  std::vector<int> permutation(int n);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(values[static_cast<std::size_t>(i)],
                values[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace icrl::numkit
