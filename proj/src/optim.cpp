#include "kmoco/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kmoco/errors.hpp"

namespace kmoco {

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(std::min(step, total_steps));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_steps)));
}

OptimizerState::OptimizerState(SgdConfig config, std::span<const ad::Var> params)
    : config_(config) {
  velocity_.reserve(params.size());
  for (const auto& p : params) velocity_.emplace_back(p.shape(), 0.0);
}

void OptimizerState::restore(std::vector<Tensor> velocity, std::size_t step) {
  if (velocity.size() != velocity_.size())
    throw DimensionError("optimizer restore: velocity count does not match");
  for (std::size_t i = 0; i < velocity.size(); ++i)
    if (velocity[i].shape() != velocity_[i].shape())
      throw DimensionError("optimizer restore: velocity " + std::to_string(i) + " has the wrong shape");
  velocity_ = std::move(velocity);
  step_ = step;
}

void sgd_step(std::span<ad::Var> params, OptimizerState& state) {
  if (params.size() != state.velocity_.size())
    throw DimensionError("sgd_step: parameter count does not match optimizer state");
  for (const auto& p : params)
    if (p.grad()) check_finite(*p.grad(), "gradient");

  const double lr = state.current_lr();
  const double mu = state.config_.momentum, wd = state.config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = state.velocity_[i];
    auto& w = params[i].mutable_value();
    if (v.shape() != w.shape()) throw DimensionError("sgd_step: velocity shape mismatch");
    const auto& g = params[i].grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      v[j] = mu * v[j] + gj + wd * w[j];
      w[j] -= lr * v[j];
    }
  }
  ++state.step_;
}

}  // namespace kmoco
