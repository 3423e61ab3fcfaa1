#include "kmoco/losses.hpp"

#include "kmoco/errors.hpp"

namespace kmoco {

void LossBatch::validate() const {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (views_per_anchor == 0) throw ConfigError("views_per_anchor must be at least 1");
  if (anchors.rank() != 2 || positives.shape().size() != 2 ||
      positives.shape()[0] != anchors.dim(0) * views_per_anchor ||
      positives.shape()[1] != anchors.dim(1))
    throw DimensionError("loss batch: positives " + shape_str(positives.shape()) + " vs anchors " +
                         shape_str(anchors.shape()) + " with " + std::to_string(views_per_anchor) +
                         " views per anchor");
}

ad::Var instance_loss(const LossBatch& batch, const Tensor& queue_h) {
  batch.validate();
  const std::size_t b = batch.num_anchors(), l = batch.views_per_anchor, c = batch.anchors.dim(1);
  const std::size_t rows = b * l;
  if (queue_h.rank() != 2 || queue_h.dim(1) != c)
    throw DimensionError("instance_loss: queue shape " + shape_str(queue_h.shape()));

  // l_pos = bmm(positives.view(B,L,C), anchors.view(B,C,1)) → [B·L, 1]
  ad::Var l_pos = ad::bmm(ad::reshape(batch.positives, {b, l, c}),
                          ad::constant(batch.anchors.reshaped({b, c, 1})));
  l_pos = ad::reshape(l_pos, {rows, 1});
  ad::Var l_neg = ad::matmul_nt(batch.positives, ad::constant(queue_h));
  ad::Var logits = ad::scale(ad::concat({l_pos, l_neg}, 1), 1.0 / batch.tau);
  const std::vector<std::size_t> targets(rows, 0);
  return ad::softmax_cross_entropy(logits, targets);
}

ad::Var instance_loss(const LossBatch& batch, const DualQueue& bank) {
  return instance_loss(batch, bank.qh());
}

ad::Var nn_loss(const LossBatch& batch, const Tensor& queue_h,
                const std::vector<std::vector<std::size_t>>& indices) {
  batch.validate();
  if (indices.size() != batch.positives.shape()[0])
    throw DimensionError("nn_loss: need one index list per positive");
  if (queue_h.rank() != 2 || queue_h.dim(1) != batch.anchors.dim(1))
    throw DimensionError("nn_loss: queue shape " + shape_str(queue_h.shape()));
  for (const auto& row : indices)
    for (auto j : row)
      if (j >= queue_h.dim(0))
        throw RetrievalError("nn_loss: neighbour index " + std::to_string(j) + " >= K");
  ad::Var l_neg = ad::scale(ad::matmul_nt(batch.positives, ad::constant(queue_h)), 1.0 / batch.tau);
  return ad::multi_label_cross_entropy(l_neg, indices, batch.denominator);
}

ad::Var nn_loss(const LossBatch& batch, const DualQueue& bank,
                const std::vector<std::vector<std::size_t>>& indices) {
  return nn_loss(batch, bank.qh(), indices);
}

LossTerms total_loss(const LossBatch& batch, const DualQueue& bank,
                     const std::vector<std::vector<std::size_t>>& indices) {
  LossTerms out;
  ad::Var inst = instance_loss(batch, bank);
  out.instance = inst.value().item();
  if (batch.lambda == 0.0 || indices.empty()) {
    out.total = inst;
    return out;
  }
  ad::Var nn = nn_loss(batch, bank, indices);
  out.nn = nn.value().item();
  out.nn_active = true;
  out.total = ad::add(inst, ad::scale(nn, batch.lambda));
  return out;
}

}  // namespace kmoco
