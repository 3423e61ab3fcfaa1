#pragma once

#include <functional>
#include <vector>

#include "kmoco/tensor.hpp"

namespace kmoco {

using ScalarFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

// Max over every parameter entry of
//   |analytic − central difference| / (|analytic| + |fd| + 1e-12).
// eps must lie in (0, 1e-3]. Parameter values are restored afterwards and
// their gradients cleared.
double grad_check(const ScalarFn& f, std::vector<ad::Var>& params, double eps = 1e-5);

}  // namespace kmoco
