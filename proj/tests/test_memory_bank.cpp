#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "kmoco/errors.hpp"
#include "kmoco/memory_bank.hpp"
#include "support.hpp"

using namespace kmoco;

namespace {

std::vector<double> normalized(std::span<const double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

// Brute force: score every row, stable sort by (score desc, index asc).
std::vector<std::size_t> oracle_topk(const Tensor& qg, std::span<const double> query, std::size_t k) {
  const auto q = normalized(query);
  std::vector<std::pair<double, std::size_t>> s;
  for (std::size_t i = 0; i < qg.dim(0); ++i) {
    double d = 0;
    for (std::size_t c = 0; c < qg.dim(1); ++c) d += qg.at(i, c) * q[c];
    s.push_back({d, i});
  }
  std::sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(s[i].second);
  return out;
}

}  // namespace

TEST_CASE("wraparound: K=4, two batches of 2 bring the pointer back to 0") {
  Rng rng = derive_rng(1);
  DualQueue q(4, 3, 5, rng);
  CHECK(q.pointer() == 0);
  CHECK(q.filled() == 0);
  q.enqueue(kt::rand_unit_rows(rng, 2, 3), kt::randn(rng, {2, 5}));
  CHECK(q.pointer() == 2);
  q.enqueue(kt::rand_unit_rows(rng, 2, 3), kt::randn(rng, {2, 5}));
  CHECK(q.pointer() == 0);
  CHECK(q.filled() == 4);
}

TEST_CASE("enqueue writes the batch at [p, p+B) exactly; Q_g rows are normalized") {
  Rng rng = derive_rng(2);
  DualQueue q(7, 3, 4, rng);
  q.enqueue(kt::rand_unit_rows(rng, 5, 3), kt::randn(rng, {5, 4}));
  const Tensor h = kt::rand_unit_rows(rng, 4, 3), g = kt::randn(rng, {4, 4});
  q.enqueue(h, g);  // rows 5, 6, 0, 1
  const std::size_t rows[] = {5, 6, 0, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(q.qh().at(rows[i], c) == h.at(i, c));
    const auto gn = normalized(g.row(i));
    for (std::size_t c = 0; c < 4; ++c) CHECK(q.qg().at(rows[i], c) == doctest::Approx(gn[c]).epsilon(1e-14));
  }
  CHECK(q.pointer() == 2);
  CHECK_THROWS_AS(q.enqueue(kt::rand_unit_rows(rng, 8, 3), kt::randn(rng, {8, 4})), ConfigError);
  CHECK_THROWS_AS(q.enqueue(kt::rand_unit_rows(rng, 2, 3), kt::randn(rng, {3, 4})), DimensionError);
}

TEST_CASE("1000 random enqueues agree with a shadow provenance log") {
  Rng rng = derive_rng(3);
  const std::size_t K = 37;
  DualQueue q(K, 4, 6, rng);
  std::vector<std::int64_t> shadow(K, DualQueue::kInitRow);
  std::vector<Tensor> h_of, g_of;  // by id
  std::size_t ptr = 0, mismatches = 0;
  std::int64_t next_id = 0;
  for (int step = 0; step < 1000; ++step) {
    const std::size_t B = kt::pick(rng, 1, K);
    const Tensor h = kt::rand_unit_rows(rng, B, 4), g = kt::randn(rng, {B, 6});
    std::vector<std::int64_t> ids(B);
    for (std::size_t i = 0; i < B; ++i) {
      ids[i] = next_id++;
      h_of.push_back(Tensor::matrix(1, 4, {h.row(i).begin(), h.row(i).end()}));
      g_of.push_back(Tensor::matrix(1, 6, normalized(g.row(i))));
      shadow[(ptr + i) % K] = ids[i];
    }
    ptr = (ptr + B) % K;
    q.enqueue(h, g, ids);
    for (std::size_t r = 0; r < K; ++r) {
      const auto id = shadow[r];
      if (q.provenance()[r] != id) ++mismatches;
      if (id < 0) continue;
      for (std::size_t c = 0; c < 4; ++c) mismatches += q.qh().at(r, c) != h_of[id][c];
      for (std::size_t c = 0; c < 6; ++c) mismatches += std::abs(q.qg().at(r, c) - g_of[id][c]) > 1e-14;
    }
    if (step % 100 == 0) {
      for (std::size_t r = 0; r < K; ++r) {
        double nh = 0, ng = 0;
        for (double v : q.qh().row(r)) nh += v * v;
        for (double v : q.qg().row(r)) ng += v * v;
        CHECK(std::abs(std::sqrt(nh) - 1) < 1e-9);
        CHECK(std::abs(std::sqrt(ng) - 1) < 1e-9);
      }
    }
  }
  CHECK(mismatches == 0);
  CHECK(q.pointer() == ptr);
}

TEST_CASE("topk: self retrieval, basis vectors, ties to the lower index") {
  Rng rng = derive_rng(4);
  DualQueue q(4, 2, 4, rng);
  Tensor basis({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) basis.at(i, i) = 1.0;
  q.enqueue(kt::rand_unit_rows(rng, 4, 2), basis);
  const double e2[] = {0, 0, 5, 0};
  CHECK(q.topk_neighbors(e2, 1) == std::vector<std::size_t>{2});
  const double row1[] = {0, 1, 0, 0};
  CHECK(q.topk_neighbors(row1, 1) == std::vector<std::size_t>{1});
  const double tie[] = {1, 0, 1, 0};
  CHECK(q.topk_neighbors(tie, 2) == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(q.topk_neighbors(e2, 5), RetrievalError);
}

TEST_CASE("topk refuses k beyond the filled rows") {
  Rng rng = derive_rng(5);
  DualQueue q(8, 2, 3, rng);
  q.enqueue(kt::rand_unit_rows(rng, 2, 2), kt::randn(rng, {2, 3}));
  const double v[] = {1, 0, 0};
  CHECK(q.topk_neighbors(v, 2).size() == 2);
  CHECK_THROWS_AS(q.topk_neighbors(v, 3), RetrievalError);
}

TEST_CASE("topk matches a full-sort oracle on 100 random banks, and is scale invariant") {
  Rng rng = derive_rng(6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t K = kt::pick(rng, 1, 40), C = kt::pick(rng, 1, 8), k = kt::pick(rng, 1, K);
    DualQueue q(K, 2, C, rng);
    q.enqueue(kt::rand_unit_rows(rng, K, 2), kt::randn(rng, {K, C}));
    const Tensor query = kt::randn(rng, {1, C});
    const auto got = q.topk_neighbors(query.row(0), k);
    CHECK(got == oracle_topk(q.qg(), query.row(0), k));
    std::vector<double> scaled(query.row(0).begin(), query.row(0).end());
    for (auto& v : scaled) v *= 7.5;
    CHECK(q.topk_neighbors(scaled, k) == got);
    // batched form agrees with the single-query form
    CHECK(q.topk_neighbors(query, k)[0] == got);
  }
  // the spec's 8x4 case
  DualQueue q(8, 2, 4, rng);
  q.enqueue(kt::rand_unit_rows(rng, 8, 2), kt::randn(rng, {8, 4}));
  const Tensor query = kt::randn(rng, {1, 4});
  CHECK(q.topk_neighbors(query.row(0), 3) == oracle_topk(q.qg(), query.row(0), 3));
}

TEST_CASE("neighbor_embeddings") {
  Rng rng = derive_rng(7);
  DualQueue q(6, 3, 4, rng);
  q.enqueue(kt::rand_unit_rows(rng, 6, 3), kt::randn(rng, {6, 4}));
  const std::size_t one[] = {4};
  const Tensor r = q.neighbor_embeddings(one);
  CHECK(r.shape() == Shape{1, 3});
  for (std::size_t c = 0; c < 3; ++c) CHECK(r.at(0, c) == q.qh().at(4, c));
  CHECK(q.neighbor_embeddings({}).shape() == Shape{0, 3});
  // topk on Q_g[j] then lookup gives Q_h[j]
  for (std::size_t j = 0; j < 6; ++j) {
    const auto idx = q.topk_neighbors(q.qg().row(j), 1);
    const Tensor e = q.neighbor_embeddings(idx);
    for (std::size_t c = 0; c < 3; ++c) CHECK(e.at(0, c) == q.qh().at(j, c));
  }
}

TEST_CASE("save/load round trip") {
  Rng rng = derive_rng(8);
  DualQueue a(5, 3, 4, rng), b(5, 3, 4, rng);
  a.enqueue(kt::rand_unit_rows(rng, 3, 3), kt::randn(rng, {3, 4}));
  TensorTable t;
  a.save(t);
  b.load(t);
  CHECK(b.qh() == a.qh());
  CHECK(b.qg() == a.qg());
  CHECK(b.pointer() == 3);
  CHECK(b.filled() == 3);
  DualQueue c(6, 3, 4, rng);
  CHECK_THROWS(c.load(t));
}
