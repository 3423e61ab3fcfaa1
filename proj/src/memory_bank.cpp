#include "kmoco/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kmoco/errors.hpp"
#include "kmoco/kernels.hpp"

namespace kmoco {

namespace {

void normalize_rows(Tensor& t) {
  const std::size_t d = t.dim(1);
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    auto row = t.row(r);
    double s = 0.0;
    for (double v : row) s += v * v;
    const double n = std::sqrt(s);
    if (!(n > 0.0)) throw NumericError("memory bank: zero feature row");
    for (std::size_t j = 0; j < d; ++j) row[j] /= n;
  }
}

}  // namespace

DualQueue::DualQueue(std::size_t capacity, std::size_t dim_h, std::size_t dim_g, Rng& rng)
    : capacity_(capacity),
      qh_({capacity, dim_h}),
      qg_({capacity, dim_g}),
      source_(capacity, kInitRow) {
  for (auto& v : qh_.vec()) v = normal(rng);
  for (auto& v : qg_.vec()) v = normal(rng);
  if (capacity > 0) {
    normalize_rows(qh_);
    normalize_rows(qg_);
  }
}

void DualQueue::enqueue(const Tensor& anchors_h, const Tensor& anchors_g,
                        std::span<const std::int64_t> ids) {
  if (anchors_h.rank() != 2 || anchors_g.rank() != 2 || anchors_h.dim(0) != anchors_g.dim(0) ||
      anchors_h.dim(1) != qh_.dim(1) || anchors_g.dim(1) != qg_.dim(1))
    throw DimensionError("enqueue: batch shapes " + shape_str(anchors_h.shape()) + " / " +
                         shape_str(anchors_g.shape()) + " do not match the bank");
  const std::size_t b = anchors_h.dim(0);
  if (b > capacity_)
    throw ConfigError("enqueue: batch of " + std::to_string(b) + " exceeds capacity " +
                      std::to_string(capacity_));
  if (!ids.empty() && ids.size() != b) throw DimensionError("enqueue: provenance id count");
  Tensor g = anchors_g;
  normalize_rows(g);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t row = (ptr_ + i) % capacity_;
    std::ranges::copy(anchors_h.row(i), qh_.row(row).begin());
    std::ranges::copy(g.row(i), qg_.row(row).begin());
    source_[row] = ids.empty() ? static_cast<std::int64_t>(i) : ids[i];
  }
  if (capacity_ > 0) ptr_ = (ptr_ + b) % capacity_;
  filled_ = std::min(capacity_, filled_ + b);
}

std::vector<std::size_t> DualQueue::topk_neighbors(std::span<const double> query_g,
                                                   std::size_t k) const {
  Tensor q({1, query_g.size()}, std::vector<double>(query_g.begin(), query_g.end()));
  return topk_neighbors(q, k).front();
}

std::vector<std::vector<std::size_t>> DualQueue::topk_neighbors(const Tensor& queries_g,
                                                                std::size_t k) const {
  if (k > filled_)
    throw RetrievalError("topk_neighbors: k=" + std::to_string(k) + " exceeds filled rows (" +
                         std::to_string(filled_) + ")");
  if (queries_g.rank() != 2 || queries_g.dim(1) != qg_.dim(1))
    throw DimensionError("topk_neighbors: query shape " + shape_str(queries_g.shape()));
  const std::size_t r = queries_g.dim(0), d = qg_.dim(1);
  Tensor q = queries_g;
  normalize_rows(q);
  std::vector<double> sims(r * capacity_);
  kernels::parallel::gemm_nt(r, capacity_, d, q.data().data(), qg_.data().data(), sims.data(), false);

  std::vector<std::vector<std::size_t>> out(r);
  std::vector<std::size_t> idx(capacity_);
  for (std::size_t i = 0; i < r; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    const double* s = sims.data() + i * capacity_;
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                      [s](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
    out[i].assign(idx.begin(), idx.begin() + static_cast<long>(k));
  }
  return out;
}

Tensor DualQueue::neighbor_embeddings(std::span<const std::size_t> indices) const {
  Tensor out({indices.size(), qh_.dim(1)});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= capacity_)
      throw RetrievalError("neighbor_embeddings: index " + std::to_string(indices[i]) +
                           " out of range");
    std::ranges::copy(qh_.row(indices[i]), out.row(i).begin());
  }
  return out;
}

void DualQueue::save(TensorTable& table) const {
  table.put("bank.qh", qh_);
  table.put("bank.qg", qg_);
  table.put("bank.ptr", Tensor::scalar(static_cast<double>(ptr_)));
  table.put("bank.filled", Tensor::scalar(static_cast<double>(filled_)));
}

void DualQueue::load(const TensorTable& table) {
  const Tensor& qh = table.get("bank.qh");
  const Tensor& qg = table.get("bank.qg");
  if (qh.rank() != 2 || qg.rank() != 2 || qh.dim(0) != qg.dim(0))
    throw FormatError("checkpoint bank tensors are not aligned");
  if (capacity_ != 0 && (qh.shape() != qh_.shape() || qg.shape() != qg_.shape()))
    throw ConfigError("checkpoint bank shape differs from the configured queue");
  qh_ = qh;
  qg_ = qg;
  capacity_ = qh.dim(0);
  ptr_ = static_cast<std::size_t>(table.get("bank.ptr").item());
  filled_ = table.contains("bank.filled") ? static_cast<std::size_t>(table.get("bank.filled").item())
                                          : capacity_;
  source_.assign(capacity_, kInitRow);
}

}  // namespace kmoco
