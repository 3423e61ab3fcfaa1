#include "kmoco/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>
#include <vector>

namespace kmoco::kernels {

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

namespace {

// Four independent accumulators; the order is fixed, so the result is too.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    s0 += a[p] * b[p];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
  }
  for (; p < n; ++p) s0 += a[p] * b[p];
  return (s0 + s1) + (s2 + s3);
}

// Row block of C = A·B without threading; callers parallelize around it.
inline void gemm_nn_rows(std::size_t i0, std::size_t i1, std::size_t n, std::size_t k,
                         const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = i0; i < i1; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// col[(i*9 + kr*3 + kc), r*W + c] = x[i, r+kr-1, c+kc-1] (zero outside).
void im2col3x3(std::size_t in_ch, std::size_t H, std::size_t W, const double* x, double* col) {
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  for (std::size_t i = 0; i < in_ch; ++i)
    for (long kr = 0; kr < 3; ++kr)
      for (long kc = 0; kc < 3; ++kc) {
        double* dst = col + ((i * 9) + kr * 3 + kc) * H * W;
        const double* src = x + i * H * W;
        for (long r = 0; r < h; ++r) {
          const long rr = r + kr - 1;
          for (long c = 0; c < w; ++c) {
            const long cc = c + kc - 1;
            dst[r * w + c] = (rr < 0 || rr >= h || cc < 0 || cc >= w) ? 0.0 : src[rr * w + cc];
          }
        }
      }
}

void col2im3x3(std::size_t in_ch, std::size_t H, std::size_t W, const double* col, double* x) {
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  std::fill(x, x + in_ch * H * W, 0.0);
  for (std::size_t i = 0; i < in_ch; ++i)
    for (long kr = 0; kr < 3; ++kr)
      for (long kc = 0; kc < 3; ++kc) {
        const double* src = col + ((i * 9) + kr * 3 + kc) * H * W;
        double* dst = x + i * H * W;
        for (long r = 0; r < h; ++r) {
          const long rr = r + kr - 1;
          if (rr < 0 || rr >= h) continue;
          for (long c = 0; c < w; ++c) {
            const long cc = c + kc - 1;
            if (cc < 0 || cc >= w) continue;
            dst[rr * w + cc] += src[r * w + c];
          }
        }
      }
}

}  // namespace

namespace parallel {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(m); ++i)
    gemm_nn_rows(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, n, k, a, b, c,
                 accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(m); ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double s = dot(a + i * k, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(m); ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void conv3x3_forward(const ConvDims& d, const double* x, const double* w, const double* b,
                     double* y) {
  const std::size_t hw = d.height * d.width, kk = d.in_ch * 9;
#pragma omp parallel
  {
    std::vector<double> col(kk * hw);
#pragma omp for schedule(static)
    for (long n = 0; n < static_cast<long>(d.batch); ++n) {
      im2col3x3(d.in_ch, d.height, d.width, x + n * d.in_ch * hw, col.data());
      double* yn = y + n * d.out_ch * hw;
      for (std::size_t o = 0; o < d.out_ch; ++o) std::fill(yn + o * hw, yn + (o + 1) * hw, b[o]);
      gemm_nn_rows(0, d.out_ch, hw, kk, w, col.data(), yn, true);
    }
  }
}

void conv3x3_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                      double* dx, double* dw, double* db) {
  const std::size_t hw = d.height * d.width, kk = d.in_ch * 9;
  std::vector<double> cols(d.batch * kk * hw);

#pragma omp parallel for schedule(static)
  for (long n = 0; n < static_cast<long>(d.batch); ++n)
    im2col3x3(d.in_ch, d.height, d.width, x + n * d.in_ch * hw, cols.data() + n * kk * hw);

  // Each output channel owns its slice of dw and its db entry.
#pragma omp parallel for schedule(static)
  for (long o = 0; o < static_cast<long>(d.out_ch); ++o) {
    double* dwo = dw + o * kk;
    std::fill(dwo, dwo + kk, 0.0);
    double bsum = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const double* g = dy + (n * d.out_ch + o) * hw;
      const double* col = cols.data() + n * kk * hw;
      for (std::size_t j = 0; j < hw; ++j) bsum += g[j];
      for (std::size_t p = 0; p < kk; ++p) dwo[p] += dot(g, col + p * hw, hw);
    }
    db[o] = bsum;
  }

  if (!dx) return;
#pragma omp parallel
  {
    std::vector<double> dcol(kk * hw);
#pragma omp for schedule(static)
    for (long n = 0; n < static_cast<long>(d.batch); ++n) {
      const double* g = dy + n * d.out_ch * hw;
      // dcol[kk, hw] = wᵀ[kk, Co] · g[Co, hw]
      std::fill(dcol.begin(), dcol.end(), 0.0);
      for (std::size_t o = 0; o < d.out_ch; ++o)
        for (std::size_t p = 0; p < kk; ++p) {
          const double wv = w[o * kk + p];
          if (wv == 0.0) continue;
          double* dst = dcol.data() + p * hw;
          const double* src = g + o * hw;
          for (std::size_t j = 0; j < hw; ++j) dst[j] += wv * src[j];
        }
      col2im3x3(d.in_ch, d.height, d.width, dcol.data(), dx + n * d.in_ch * hw);
    }
  }
}

void nearest_centroid(std::size_t n, std::size_t k, std::size_t d, const double* points,
                      const double* centroids, std::size_t* assign, double* dist) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    const double* p = points + i * d;
    for (std::size_t c = 0; c < k; ++c) {
      const double* q = centroids + c * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = p[j] - q[j];
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        arg = c;
      }
    }
    assign[i] = arg;
    dist[i] = best;
  }
}

}  // namespace parallel
}  // namespace kmoco::kernels
