#include "kelm/grad_check.hpp"

#include <cmath>

namespace kelm {

GradCheckReport grad_check(const std::function<Tensor()>& f, ModelParams& params, double eps) {
  if (eps <= 0.0) throw Error("grad_check: eps must be positive");

  params.zero_grads();
  Tensor loss = f();
  if (!std::isfinite(loss.item())) throw Error("grad_check: non-finite loss");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.count());
  for (auto [name, t] : params.entries()) analytic.push_back(t.grad());

  GradCheckReport report;
  size_t pi = 0;
  for (auto [name, t] : params.entries()) {
    auto& vals = t.values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double fp = f().item();
      vals[i] = saved - eps;
      const double fm = f().item();
      vals[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) throw Error("grad_check: non-finite loss");

      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coordinates_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
      }
    }
    ++pi;
  }
  return report;
}

}  // namespace kelm
