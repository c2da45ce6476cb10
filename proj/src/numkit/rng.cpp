#include "icrl/numkit/rng.hpp"

#include <cmath>

#include "icrl/errors.hpp"

namespace icrl::numkit {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a over bytes, used only for stream labels.
std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

Rng Rng::derive(std::uint64_t master_seed, std::string_view label,
                std::uint64_t index) {
  std::uint64_t state = master_seed;
  std::uint64_t a = splitmix64(state);
  state ^= fnv1a(label);
  std::uint64_t b = splitmix64(state);
  state ^= index * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL;
  std::uint64_t c = splitmix64(state);
  return Rng(a ^ (b * 3) ^ (c * 7));
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  // 53 random bits -> double in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw ContractError("Rng::uniform_int: n must be positive");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = next_u64();
  while (draw >= limit) draw = next_u64();
  return static_cast<int>(draw % bound);
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller; u1 is kept strictly positive for the log.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd out(rows, cols);
  // Row-major fill order so the draw sequence is independent of storage.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal();
  return out;
}

Eigen::VectorXd Rng::dirichlet_uniform(Eigen::Index n) {
  if (n <= 0) throw ContractError("Rng::dirichlet_uniform: n must be positive");
  Eigen::VectorXd gammas(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    gammas[i] = -std::log(u);  // Exp(1) == Gamma(1, 1)
  }
  return gammas / gammas.sum();
}

int Rng::categorical(const Eigen::VectorXd& probs) {
  if (probs.size() == 0) throw ContractError("Rng::categorical: empty vector");
  if ((probs.array() < -1e-12).any())
    throw ContractError("Rng::categorical: negative probability");
  const double total = probs.sum();
  if (!(total > 0.0))
    throw ContractError("Rng::categorical: probabilities sum to zero");
  const double draw = uniform() * total;
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (draw < cumulative) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
  shuffle(out);
  return out;
}

}  // namespace icrl::numkit
