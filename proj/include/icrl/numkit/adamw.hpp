#pragma once

#include "icrl/numkit/tensor.hpp"

namespace icrl::numkit {

// AdamW with decoupled weight decay:
//   m <- b1*m + (1-b1)*g           v <- b2*v + (1-b2)*g^2
//   mhat = m/(1-b1^t)              vhat = v/(1-b2^t)
//   p <- p - lr*(mhat/(sqrt(vhat)+eps) + wd*p)
struct OptimState {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long step = 0;  // number of completed steps
  NamedTensors m;
  NamedTensors v;
};

// One optimizer step over every parameter in the store.  Parameters missing
// from `grads` are treated as having zero gradient (their moments decay and
// weight decay still applies).  Gradient shapes must match parameter shapes.
// Throws NumericsError if any gradient or updated parameter is non-finite.
void adamw_step(ParamStore& params, const GradMap& grads, OptimState& state);

}  // namespace icrl::numkit
