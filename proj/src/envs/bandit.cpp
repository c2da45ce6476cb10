#include "icrl/envs/bandit.hpp"

#include <cmath>

#include "icrl/errors.hpp"

namespace icrl::envs {

void BanditFamily::validate() const {
  if (num_arms <= 0 || feature_dim <= 0)
    throw ContractError("BanditFamily: num_arms and feature_dim must be positive");
  if (noise_var < 0.0)
    throw ContractError("BanditFamily: noise_var must be non-negative");
  if (features.rows() != num_arms || features.cols() != feature_dim)
    throw ShapeError("BanditFamily: feature table shape mismatch");
}

BanditFamily make_bandit_family(std::uint64_t seed, int num_arms,
                                int feature_dim, double noise_var) {
  BanditFamily family;
  family.num_arms = num_arms;
  family.feature_dim = feature_dim;
  family.noise_var = noise_var;
  family.seed = seed;
  numkit::Rng rng = numkit::Rng::derive(seed, "bandit_family_features");
  family.features = rng.normal_matrix(num_arms, feature_dim) /
                    std::sqrt(static_cast<double>(feature_dim));
  family.validate();
  return family;
}

numkit::Vector sample_bandit_theta(const BanditFamily& family,
                                   numkit::Rng& rng) {
  return rng.normal_vector(family.feature_dim) /
         std::sqrt(static_cast<double>(family.feature_dim));
}

numkit::Vector bandit_means(const BanditFamily& family,
                            const numkit::Vector& theta) {
  if (theta.size() != family.feature_dim)
    throw ShapeError("bandit_means: theta dimension mismatch");
  return family.features * theta;
}

double bandit_pull(const BanditFamily& family, const numkit::Vector& theta,
                   int arm, numkit::Rng& rng) {
  if (arm < 0 || arm >= family.num_arms)
    throw ContractError("bandit_pull: arm index out of range");
  const double mu = family.features.row(arm).dot(theta);
  if (family.noise_var == 0.0) return mu;
  return rng.normal(mu, std::sqrt(family.noise_var));
}

int bandit_best_arm(const BanditFamily& family, const numkit::Vector& theta) {
  return numkit::argmax(bandit_means(family, theta));
}

}  // namespace icrl::envs
