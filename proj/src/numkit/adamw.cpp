#include "icrl/numkit/adamw.hpp"

#include <cmath>

namespace icrl::numkit {

void adamw_step(ParamStore& params, const GradMap& grads, OptimState& state) {
  for (const auto& [name, g] : grads)
    if (!params.contains(name))
      throw ContractError("adamw_step: gradient for unknown parameter '" +
                          name + "'");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params.tensors) {
    Matrix& m = state.m.try_emplace(name, Matrix::Zero(p.rows(), p.cols()))
                    .first->second;
    Matrix& v = state.v.try_emplace(name, Matrix::Zero(p.rows(), p.cols()))
                    .first->second;
    auto git = grads.find(name);
    if (git != grads.end()) {
      const Matrix& g = git->second;
      require_shape(g, p.rows(), p.cols(), "adamw_step gradient '" + name + "'");
      require_finite(g, "adamw_step gradient '" + name + "'");
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    } else {
      m *= state.beta1;
      v *= state.beta2;
    }
    const Matrix mhat = m / bias1;
    const Matrix denom = ((v / bias2).array().sqrt() + state.epsilon).matrix();
    p -= state.learning_rate *
         (mhat.cwiseQuotient(denom) + state.weight_decay * p);
    require_finite(p, "adamw_step parameter '" + name + "'");
  }
}

}  // namespace icrl::numkit
