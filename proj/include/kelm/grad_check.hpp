#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kelm/params.hpp"
#include "kelm/tensor.hpp"

namespace kelm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int coordinates_checked = 0;
};

// Central finite differences against the analytic gradients of a scalar
// function. `f` must rebuild the loss from the current parameter values on
// every call. Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::function<Tensor()>& f, ModelParams& params, double eps);

}  // namespace kelm
