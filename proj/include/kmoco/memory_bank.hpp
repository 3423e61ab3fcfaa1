#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kmoco/checkpoint.hpp"
#include "kmoco/rng.hpp"
#include "kmoco/tensor.hpp"

namespace kmoco {

// Two row-aligned circular buffers sharing one write pointer:
//   qh [K × C_h]  post-head anchor embeddings (loss space)
//   qg [K × C_g]  pre-head anchor features, unit-normalized on insert (mining space)
// Row i of both always comes from the same anchor.
class DualQueue {
 public:
  static constexpr std::int64_t kInitRow = -1;  // provenance of random initial rows

  DualQueue() = default;
  // Rows start as unit-normalized Gaussian noise; filled() starts at 0.
  DualQueue(std::size_t capacity, std::size_t dim_h, std::size_t dim_g, Rng& rng);

  std::size_t capacity() const { return capacity_; }
  std::size_t filled() const { return filled_; }
  std::size_t pointer() const { return ptr_; }
  const Tensor& qh() const { return qh_; }
  const Tensor& qg() const { return qg_; }
  // Caller-supplied id of the anchor stored in each row.
  const std::vector<std::int64_t>& provenance() const { return source_; }

  // Writes both batches at rows [p, p+B) mod K in the same order. B > K is a
  // ConfigError. `ids` (optional) are recorded as row provenance.
  void enqueue(const Tensor& anchors_h, const Tensor& anchors_g,
               std::span<const std::int64_t> ids = {});

  // Indices of the k rows of qg with largest dot product against the
  // (normalized) query, descending; ties go to the lower index. All K rows
  // are candidates; k > filled() raises RetrievalError.
  std::vector<std::size_t> topk_neighbors(std::span<const double> query_g, std::size_t k) const;
  // Row-batched form: queries [R × C_g] → R index lists.
  std::vector<std::vector<std::size_t>> topk_neighbors(const Tensor& queries_g, std::size_t k) const;

  // Rows of qh at `indices` as an [n × C_h] tensor.
  Tensor neighbor_embeddings(std::span<const std::size_t> indices) const;

  // "bank.qh", "bank.qg", "bank.ptr", "bank.filled".
  void save(TensorTable& table) const;
  void load(const TensorTable& table);

 private:
  std::size_t capacity_ = 0, ptr_ = 0, filled_ = 0;
  Tensor qh_, qg_;
  std::vector<std::int64_t> source_;
};

}  // namespace kmoco
