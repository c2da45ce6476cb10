#pragma once

#include <string>

#include "icrl/numkit/graph.hpp"

namespace icrl::numkit {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_row = 0;
  Index worst_col = 0;
  bool pass = false;
};

// Compares backward() gradients against central finite differences
//   fd = (f(p + h) - f(p - h)) / (2h)
// for every coordinate of every parameter.  The relative error uses the
// floor max(1e-6, |ad|, |fd|) in the denominator so near-zero gradients are
// compared absolutely at the 1e-6 scale.
//
// If `override_grads` is supplied it is checked in place of the graph's own
// backward output (used to prove the checker catches corrupted gradients).
GradCheckReport finite_diff_check(Graph& graph, Var loss,
                                  const NamedTensors& inputs,
                                  const ParamStore& params, double tolerance,
                                  double step = 1e-5,
                                  const GradMap* override_grads = nullptr);

}  // namespace icrl::numkit
