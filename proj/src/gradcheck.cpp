#include "kmoco/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "kmoco/errors.hpp"

namespace kmoco {

namespace {

double eval(const ScalarFn& f, const std::vector<ad::Var>& params) {
  const double v = f(params).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, std::vector<ad::Var>& params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw ConfigError("grad_check: eps must be in (0, 1e-3]");
  for (auto& p : params) p.zero_grad();
  ad::backward(f(params));

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.grad() ? *p.grad() : Tensor(p.shape(), 0.0));
    check_finite(analytic.back(), "grad_check analytic gradient");
    p.zero_grad();
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].mutable_value();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double orig = w[j];
      w[j] = orig + eps;
      const double fp = eval(f, params);
      w[j] = orig - eps;
      const double fm = eval(f, params);
      w[j] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][j];
      worst = std::max(worst, std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12));
    }
  }
  return worst;
}

}  // namespace kmoco
