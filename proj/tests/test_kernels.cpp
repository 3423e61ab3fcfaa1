#include <doctest.h>

#include <omp.h>

#include "kmoco/kernels.hpp"
#include "support.hpp"

using namespace kmoco;
namespace K = kmoco::kernels;

// The parallel kernels reorder nothing inside a single output element, but
// gemm blocking may change the summation order, so agreement is checked to a
// tight relative tolerance against the serial reference.
namespace {

std::vector<double> randv(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0, s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
    s = std::max(s, std::abs(a[i]));
  }
  return m / (s + 1e-300);
}

}  // namespace

TEST_CASE("gemm variants: parallel matches the serial reference") {
  Rng rng = derive_rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = kt::pick(rng, 1, 70), n = kt::pick(rng, 1, 70), k = kt::pick(rng, 1, 70);
    const auto a = randv(rng, m * k), b = randv(rng, k * n), bt = randv(rng, n * k), at = randv(rng, k * m);
    const bool acc = trial % 2;
    const auto c0 = randv(rng, m * n);
    auto s = c0, p = c0;
    K::serial::gemm_nn(m, n, k, a.data(), b.data(), s.data(), acc);
    K::parallel::gemm_nn(m, n, k, a.data(), b.data(), p.data(), acc);
    CHECK(rel_diff(s, p) < 1e-13);
    s = c0, p = c0;
    K::serial::gemm_nt(m, n, k, a.data(), bt.data(), s.data(), acc);
    K::parallel::gemm_nt(m, n, k, a.data(), bt.data(), p.data(), acc);
    CHECK(rel_diff(s, p) < 1e-13);
    s = c0, p = c0;
    K::serial::gemm_tn(m, n, k, at.data(), b.data(), s.data(), acc);
    K::parallel::gemm_tn(m, n, k, at.data(), b.data(), p.data(), acc);
    CHECK(rel_diff(s, p) < 1e-13);
  }
}

TEST_CASE("gemm: a hand-computed product") {
  const double a[] = {1, 2, 3, 4, 5, 6};  // 2x3
  const double b[] = {1, 0, 0, 1, 1, 1};  // 3x2
  double c[4];
  K::serial::gemm_nn(2, 2, 3, a, b, c, false);
  CHECK(c[0] == 4);
  CHECK(c[1] == 5);
  CHECK(c[2] == 10);
  CHECK(c[3] == 11);
  K::parallel::gemm_nn(2, 2, 3, a, b, c, true);
  CHECK(c[3] == 22);
}

TEST_CASE("conv3x3 forward and backward: parallel matches serial") {
  Rng rng = derive_rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    K::ConvDims d{kt::pick(rng, 1, 4), kt::pick(rng, 1, 5), kt::pick(rng, 1, 6), kt::pick(rng, 1, 9),
                  kt::pick(rng, 1, 9)};
    const std::size_t nx = d.batch * d.in_ch * d.height * d.width, ny = d.batch * d.out_ch * d.height * d.width;
    const auto x = randv(rng, nx), w = randv(rng, d.out_ch * d.in_ch * 9), b = randv(rng, d.out_ch),
               dy = randv(rng, ny);
    std::vector<double> ys(ny), yp(ny);
    K::serial::conv3x3_forward(d, x.data(), w.data(), b.data(), ys.data());
    K::parallel::conv3x3_forward(d, x.data(), w.data(), b.data(), yp.data());
    CHECK(rel_diff(ys, yp) < 1e-13);

    std::vector<double> dxs(nx, 7), dxp(nx, 7), dws(w.size(), 7), dwp(w.size(), 7), dbs(b.size(), 7), dbp(b.size(), 7);
    K::serial::conv3x3_backward(d, x.data(), w.data(), dy.data(), dxs.data(), dws.data(), dbs.data());
    K::parallel::conv3x3_backward(d, x.data(), w.data(), dy.data(), dxp.data(), dwp.data(), dbp.data());
    CHECK(rel_diff(dxs, dxp) < 1e-13);
    CHECK(rel_diff(dws, dwp) < 1e-13);
    CHECK(rel_diff(dbs, dbp) < 1e-13);
    // dx may be null
    K::parallel::conv3x3_backward(d, x.data(), w.data(), dy.data(), nullptr, dwp.data(), dbp.data());
    CHECK(rel_diff(dws, dwp) < 1e-13);
  }
}

TEST_CASE("conv3x3: a single centre tap copies the input") {
  K::ConvDims d{1, 1, 1, 3, 3};
  const double x[] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  double w[9] = {0, 0, 0, 0, 1, 0, 0, 0, 0};
  const double b[] = {0.5};
  double y[9];
  K::serial::conv3x3_forward(d, x, w, b, y);
  for (int i = 0; i < 9; ++i) CHECK(y[i] == x[i] + 0.5);
  // left tap reads the left neighbour, zero at the border
  w[4] = 0;
  w[3] = 1;
  K::parallel::conv3x3_forward(d, x, w, b, y);
  CHECK(y[0] == 0.5);
  CHECK(y[1] == 1.5);
  CHECK(y[4] == 4.5);
}

TEST_CASE("nearest_centroid: parallel matches serial, ties go to the lower index") {
  Rng rng = derive_rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = kt::pick(rng, 1, 200), k = kt::pick(rng, 1, 12), d = kt::pick(rng, 1, 8);
    const auto pts = randv(rng, n * d), cen = randv(rng, k * d);
    std::vector<std::size_t> as(n), ap(n);
    std::vector<double> ds(n), dp(n);
    K::serial::nearest_centroid(n, k, d, pts.data(), cen.data(), as.data(), ds.data());
    K::parallel::nearest_centroid(n, k, d, pts.data(), cen.data(), ap.data(), dp.data());
    CHECK(as == ap);
    CHECK(rel_diff(ds, dp) < 1e-13);
  }
  const double pts[] = {0.0};
  const double cen[] = {-1.0, 1.0, 1.0};
  std::size_t a;
  double dist;
  K::parallel::nearest_centroid(1, 3, 1, pts, cen, &a, &dist);
  CHECK(a == 0);
  CHECK(dist == 1.0);
}

TEST_CASE("parallel kernels do not depend on the thread count") {
  Rng rng = derive_rng(24);
  const std::size_t m = 33, n = 47, k = 29;
  const auto a = randv(rng, m * k), b = randv(rng, n * k);
  K::ConvDims d{3, 4, 5, 8, 8};
  const auto x = randv(rng, 3 * 4 * 64), w = randv(rng, 5 * 4 * 9), bias = randv(rng, 5);
  auto run = [&](int threads) {
    K::set_num_threads(threads);
    std::vector<double> c(m * n), y(3 * 5 * 64);
    K::parallel::gemm_nt(m, n, k, a.data(), b.data(), c.data(), false);
    K::parallel::conv3x3_forward(d, x.data(), w.data(), bias.data(), y.data());
    c.insert(c.end(), y.begin(), y.end());
    return c;
  };
  const auto one = run(1), four = run(4);
  K::set_num_threads(0);
  CHECK(one == four);
}
