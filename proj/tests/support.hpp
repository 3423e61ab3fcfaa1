#pragma once

// Small generators shared by the unit tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "kmoco/rng.hpp"
#include "kmoco/tensor.hpp"

namespace kt {

using kmoco::Rng;
using kmoco::Shape;
using kmoco::Tensor;

inline Tensor randn(Rng& rng, Shape shape, double s = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = s * kmoco::normal(rng);
  return t;
}

inline Tensor rand_unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = randn(rng, {rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0;
    for (double v : t.row(r)) n += v * v;
    n = std::sqrt(n);
    for (double& v : t.row(r)) v /= n;
  }
  return t;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(kmoco::randint(rng, static_cast<long>(lo), static_cast<long>(hi)));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace kt
