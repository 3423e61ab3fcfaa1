#pragma once

#include <cstddef>
#include <vector>

#include "kmoco/memory_bank.hpp"
#include "kmoco/tensor.hpp"

namespace kmoco {

using NnDenominator = ad::NnDenominator;

// Inputs shared by both losses.
//
// positives: [B·(N+1) × C_h] online-branch embeddings; rows
//            [i·(N+1), (i+1)·(N+1)) belong to anchor i.
// anchors:   [B × C_h] momentum-branch embeddings (no gradient).
struct LossBatch {
  ad::Var positives;
  Tensor anchors;
  std::size_t views_per_anchor = 1;
  double tau = 0.2;
  double lambda = 0.4;
  std::size_t k = 20;
  NnDenominator denominator = NnDenominator::kIncludeTargets;

  std::size_t num_anchors() const { return anchors.dim(0); }
  void validate() const;  // ConfigError / DimensionError
};

// Instance discrimination: per positive p of anchor a the logits are
// [p·a, p·q_0, …, p·q_{K−1}] / τ with target 0; mean over positives.
//
// Negatives are scored against each positive (the query side), not against
// the anchor. Gradients reach the positives only.
ad::Var instance_loss(const LossBatch& batch, const Tensor& queue_h);
ad::Var instance_loss(const LossBatch& batch, const DualQueue& bank);

// Nearest-neighbour loss over l = p·Q_hᵀ / τ: per positive
// −(1/k) Σ_{j∈targets} log softmax(l)_j, mean over positives. With
// kExcludeTargets the softmax denominator for target j holds e^{l_j} plus the
// non-target rows only. `indices` has one list per positive row, mined on Q_g.
ad::Var nn_loss(const LossBatch& batch, const Tensor& queue_h,
                const std::vector<std::vector<std::size_t>>& indices);
ad::Var nn_loss(const LossBatch& batch, const DualQueue& bank,
                const std::vector<std::vector<std::size_t>>& indices);

struct LossTerms {
  ad::Var total;
  double instance = 0.0;
  double nn = 0.0;
  bool nn_active = false;
};

// instance + λ·nn. With λ = 0 or empty `indices` the NN term is skipped and
// total is the instance loss node itself.
LossTerms total_loss(const LossBatch& batch, const DualQueue& bank,
                     const std::vector<std::vector<std::size_t>>& indices);

}  // namespace kmoco
