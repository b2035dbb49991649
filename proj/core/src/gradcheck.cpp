#include "vrnmt/gradcheck.hpp"

#include <cmath>

#include "vrnmt/error.hpp"

namespace vrnmt {

GradCheckResult check_gradient(const NamedParams& params,
                               const std::function<double(bool)>& eval,
                               double step) {
  for (auto& [name, t] : params) {
    t->requires_grad = true;
    t->ensure_grad();
    t->zero_grad();
  }
  const double base = eval(true);
  if (!std::isfinite(base))
    throw NumericError("grad check: objective is not finite");

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, t] : params) {
    for (double gv : t->grad)
      if (!std::isfinite(gv))
        throw NumericError("grad check: non-finite gradient in " + name);
    analytic.push_back(t->grad);
  }

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, t] = params[pi];
    for (std::size_t i = 0; i < t->data.size(); ++i) {
      const double saved = t->data[i];
      t->data[i] = saved + step;
      const double fp = eval(false);
      t->data[i] = saved - step;
      const double fm = eval(false);
      t->data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad check: non-finite perturbed objective in " +
                           name);
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[pi][i];
      const double denom =
          std::max(1.0, std::max(std::fabs(a), std::fabs(numeric)));
      const double rel = std::fabs(a - numeric) / denom;
      ++res.entries_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_tensor = name;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace vrnmt
