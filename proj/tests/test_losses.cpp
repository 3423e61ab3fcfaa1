#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kmoco/errors.hpp"
#include "kmoco/gradcheck.hpp"
#include "kmoco/losses.hpp"
#include "support.hpp"

using namespace kmoco;

namespace {

using Lists = std::vector<std::vector<std::size_t>>;

long double dot(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  long double s = 0;
  for (std::size_t c = 0; c < a.dim(1); ++c) s += static_cast<long double>(a.at(i, c)) * b.at(j, c);
  return s;
}

// Explicit-sum references in long double.
double oracle_instance(const Tensor& p, const Tensor& a, const Tensor& q, std::size_t views, double tau) {
  long double total = 0;
  for (std::size_t r = 0; r < p.dim(0); ++r) {
    const long double pos = dot(p, r, a, r / views) / tau;
    long double den = std::exp(pos);
    for (std::size_t j = 0; j < q.dim(0); ++j) den += std::exp(dot(p, r, q, j) / tau);
    total += -(pos - std::log(den));
  }
  return static_cast<double>(total / p.dim(0));
}

double oracle_nn(const Tensor& p, const Tensor& q, const Lists& idx, double tau, NnDenominator mode) {
  long double total = 0;
  for (std::size_t r = 0; r < p.dim(0); ++r) {
    std::vector<long double> l(q.dim(0));
    for (std::size_t j = 0; j < q.dim(0); ++j) l[j] = dot(p, r, q, j) / tau;
    long double rest = 0, all = 0;
    for (std::size_t j = 0; j < l.size(); ++j) {
      all += std::exp(l[j]);
      if (std::find(idx[r].begin(), idx[r].end(), j) == idx[r].end()) rest += std::exp(l[j]);
    }
    long double s = 0;
    for (std::size_t j : idx[r]) {
      const long double den = mode == NnDenominator::kIncludeTargets ? all : std::exp(l[j]) + rest;
      s += -(l[j] - std::log(den));
    }
    total += s / idx[r].size();
  }
  return static_cast<double>(total / p.dim(0));
}

Tensor basis_rows(std::size_t dim, std::initializer_list<std::size_t> axes) {
  Tensor t({axes.size(), dim}, 0.0);
  std::size_t r = 0;
  for (std::size_t a : axes) t.at(r++, a) = 1.0;
  return t;
}

DualQueue bank_of(const Tensor& qh, Rng& rng) {
  DualQueue q(qh.dim(0), qh.dim(1), qh.dim(1), rng);
  q.enqueue(qh, qh);
  return q;
}

LossBatch make_batch(const Tensor& p, const Tensor& a, std::size_t views, double tau) {
  LossBatch b;
  b.positives = ad::constant(p);
  b.anchors = a;
  b.views_per_anchor = views;
  b.tau = tau;
  return b;
}

Lists random_lists(Rng& rng, std::size_t rows, std::size_t K, std::size_t k) {
  Lists out(rows);
  for (auto& l : out) {
    std::vector<std::size_t> all(K);
    for (std::size_t i = 0; i < K; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    l.assign(all.begin(), all.begin() + k);
  }
  return out;
}

}  // namespace

TEST_CASE("instance loss: one positive, two orthogonal negatives, tau=1 gives ln((e+2)/e)") {
  const Tensor p = basis_rows(3, {0}), q = basis_rows(3, {1, 2});
  const double v = instance_loss(make_batch(p, p, 1, 1.0), q).value().item();
  CHECK(v == doctest::Approx(std::log((std::exp(1.0) + 2) / std::exp(1.0))).epsilon(1e-14));
  CHECK(v == doctest::Approx(0.5514).epsilon(1e-4));
  // no negatives and p·a = 1: zero
  CHECK(instance_loss(make_batch(p, p, 1, 1.0), Tensor({0, 3})).value().item() == doctest::Approx(0.0));
}

TEST_CASE("nn loss: identical target row and uniform logits") {
  // k=1, target identical to p, two orthogonal others, tau=1
  const Tensor p = basis_rows(3, {0}), q = basis_rows(3, {0, 1, 2});
  LossBatch b = make_batch(p, p, 1, 1.0);
  b.k = 1;
  CHECK(nn_loss(b, q, {{0}}).value().item() == doctest::Approx(0.5514).epsilon(1e-4));
  // k = K with every logit equal: ln K
  const Tensor flat = basis_rows(5, {1, 2, 3, 4}), p5 = basis_rows(5, {0});
  b = make_batch(p5, p5, 1, 1.0);
  b.k = 4;
  CHECK(nn_loss(b, flat, {{0, 1, 2, 3}}).value().item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  // 0.5514 + 0.5514 under lambda = 1
  CHECK(0.5514 + 0.5514 == doctest::Approx(1.1028));
}

TEST_CASE("both losses match the explicit-sum oracle to 1e-10 on random inputs") {
  Rng rng = derive_rng(31);
  for (int t = 0; t < 60; ++t) {
    const std::size_t B = kt::pick(rng, 1, 5), V = kt::pick(rng, 1, 3), C = kt::pick(rng, 2, 8),
                      K = kt::pick(rng, 1, 30), k = kt::pick(rng, 1, K);
    const double tau = 0.05 + 0.5 * uniform01(rng);
    const Tensor p = kt::rand_unit_rows(rng, B * V, C), a = kt::rand_unit_rows(rng, B, C),
                 q = kt::rand_unit_rows(rng, K, C);
    LossBatch b = make_batch(p, a, V, tau);
    b.k = k;
    CHECK(std::abs(instance_loss(b, q).value().item() - oracle_instance(p, a, q, V, tau)) < 1e-10);
    const Lists idx = random_lists(rng, B * V, K, k);
    for (NnDenominator mode : {NnDenominator::kIncludeTargets, NnDenominator::kExcludeTargets}) {
      b.denominator = mode;
      CHECK(std::abs(nn_loss(b, q, idx).value().item() - oracle_nn(p, q, idx, tau, mode)) < 1e-10);
    }
  }
}

TEST_CASE("total loss: lambda=0 is the instance loss bit for bit, lambda=1 adds the nn term") {
  Rng rng = derive_rng(32);
  const Tensor p = kt::rand_unit_rows(rng, 6, 4), a = kt::rand_unit_rows(rng, 3, 4), qh = kt::rand_unit_rows(rng, 10, 4);
  const DualQueue bank = bank_of(qh, rng);
  LossBatch b = make_batch(p, a, 2, 0.2);
  b.k = 3;
  const Lists idx = random_lists(rng, 6, 10, 3);
  const double inst = instance_loss(b, bank).value().item();

  b.lambda = 0.0;
  const LossTerms zero = total_loss(b, bank, idx);
  CHECK(zero.total.value().item() == inst);
  CHECK_FALSE(zero.nn_active);

  b.lambda = 1.0;
  const LossTerms one = total_loss(b, bank, idx);
  CHECK(one.nn_active);
  CHECK(one.instance == inst);
  CHECK(one.nn == nn_loss(b, bank, idx).value().item());
  CHECK(one.total.value().item() == doctest::Approx(one.instance + one.nn).epsilon(1e-15));
}

TEST_CASE("loss is invariant to a consistent permutation of queue rows") {
  Rng rng = derive_rng(33);
  for (int t = 0; t < 20; ++t) {
    const std::size_t K = kt::pick(rng, 2, 20), C = 5, k = kt::pick(rng, 1, K);
    const Tensor p = kt::rand_unit_rows(rng, 4, C), a = kt::rand_unit_rows(rng, 2, C), q = kt::rand_unit_rows(rng, K, C);
    std::vector<std::size_t> perm(K);
    for (std::size_t i = 0; i < K; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor qp({K, C});
    std::vector<std::size_t> where(K);  // old row → new row
    for (std::size_t i = 0; i < K; ++i) {
      std::copy(q.row(perm[i]).begin(), q.row(perm[i]).end(), qp.row(i).begin());
      where[perm[i]] = i;
    }
    LossBatch b = make_batch(p, a, 2, 0.3);
    b.k = k;
    const Lists idx = random_lists(rng, 4, K, k);
    Lists idxp = idx;
    for (auto& l : idxp)
      for (auto& j : l) j = where[j];
    CHECK(std::abs(instance_loss(b, q).value().item() - instance_loss(b, qp).value().item()) < 1e-12);
    CHECK(std::abs(nn_loss(b, q, idx).value().item() - nn_loss(b, qp, idxp).value().item()) < 1e-12);
  }
}

TEST_CASE("instance loss falls as the positive similarity rises") {
  Rng rng = derive_rng(34);
  const Tensor q = kt::rand_unit_rows(rng, 16, 3);
  const Tensor p = basis_rows(3, {0});
  double prev = INFINITY;
  for (int i = 0; i <= 10; ++i) {
    const double th = M_PI * (1.0 - i / 10.0);
    const Tensor a = Tensor::matrix(1, 3, {std::cos(th), std::sin(th), 0.0});
    const double v = instance_loss(make_batch(p, a, 1, 0.2), q).value().item();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("gradients match central differences") {
  Rng rng = derive_rng(35);
  for (int t = 0; t < 8; ++t) {
    const std::size_t C = 4, K = 7, k = kt::pick(rng, 1, 4);
    const Tensor a = kt::rand_unit_rows(rng, 2, C), qh = kt::rand_unit_rows(rng, K, C);
    const DualQueue bank = bank_of(qh, rng);
    const Lists idx = random_lists(rng, 4, K, k);
    std::vector<ad::Var> params{ad::parameter(kt::randn(rng, {4, C}, 0.5))};
    const NnDenominator mode = t % 2 ? NnDenominator::kExcludeTargets : NnDenominator::kIncludeTargets;
    const double err = grad_check(
        [&](const std::vector<ad::Var>& v) {
          LossBatch b;
          b.positives = v[0];
          b.anchors = a;
          b.views_per_anchor = 2;
          b.tau = 0.3;
          b.lambda = 0.7;
          b.k = k;
          b.denominator = mode;
          return total_loss(b, bank, idx).total;
        },
        params);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("validation") {
  Rng rng = derive_rng(36);
  const Tensor p = kt::rand_unit_rows(rng, 4, 3), a = kt::rand_unit_rows(rng, 2, 3), q = kt::rand_unit_rows(rng, 5, 3);
  LossBatch b = make_batch(p, a, 3, 0.2);  // 4 rows != 2·3
  CHECK_THROWS(instance_loss(b, q));
  b.views_per_anchor = 2;
  b.tau = 0.0;
  CHECK_THROWS_AS(instance_loss(b, q), ConfigError);
  b.tau = 0.2;
  CHECK_THROWS_AS(instance_loss(b, kt::rand_unit_rows(rng, 5, 4)), DimensionError);
  b.k = 2;
  CHECK_THROWS(nn_loss(b, q, {{0, 1}}));  // one list for four rows
}
