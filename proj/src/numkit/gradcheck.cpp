#include "icrl/numkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace icrl::numkit {

GradCheckReport finite_diff_check(Graph& graph, Var loss,
                                  const NamedTensors& inputs,
                                  const ParamStore& params, double tolerance,
                                  double step,
                                  const GradMap* override_grads) {
  graph.forward(inputs, params);
  GradMap analytic = graph.backward(loss);
  if (override_grads != nullptr) analytic = *override_grads;

  ParamStore work = params;
  GradCheckReport report;
  for (const auto& [name, grad] : analytic) {
    const Matrix& base = params.at(name);
    require_shape(grad, base.rows(), base.cols(),
                  "finite_diff_check gradient '" + name + "'");
    Matrix& tensor = work.at(name);
    for (Index r = 0; r < base.rows(); ++r) {
      for (Index c = 0; c < base.cols(); ++c) {
        const double saved = tensor(r, c);
        tensor(r, c) = saved + step;
        graph.forward(inputs, work);
        const double up = graph.value(loss)(0, 0);
        tensor(r, c) = saved - step;
        graph.forward(inputs, work);
        const double down = graph.value(loss)(0, 0);
        tensor(r, c) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double ad = grad(r, c);
        const double denom = std::max({1e-6, std::abs(ad), std::abs(fd)});
        const double rel = std::abs(ad - fd) / denom;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_param = name;
          report.worst_row = r;
          report.worst_col = c;
        }
      }
    }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace icrl::numkit
