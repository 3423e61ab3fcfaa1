#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kmoco/tensor.hpp"

namespace kmoco {

struct SgdConfig {
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t total_steps = 0;  // cosine horizon; 0 keeps the rate constant
};

// base_lr · 0.5 · (1 + cos(π·t/T)), clamped to t ≤ T.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

// SGD with heavy-ball momentum and L2 weight decay:
//   v ← μ·v + grad + wd·param;  param ← param − lr(t)·v
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(SgdConfig config, std::span<const ad::Var> params);

  double current_lr() const { return cosine_lr(config_.base_lr, step_, config_.total_steps); }
  std::size_t step() const { return step_; }
  const SgdConfig& config() const { return config_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }
  // Resumes from saved velocities; shapes must match (DimensionError).
  void restore(std::vector<Tensor> velocity, std::size_t step);

  friend void sgd_step(std::span<ad::Var> params, OptimizerState& state);

 private:
  SgdConfig config_;
  std::vector<Tensor> velocity_;
  std::size_t step_ = 0;
};

// Applies one update from the parameters' accumulated gradients (a missing
// gradient counts as zero) and advances the step counter. Non-finite
// gradients raise NumericError before anything is modified.
void sgd_step(std::span<ad::Var> params, OptimizerState& state);

}  // namespace kmoco
