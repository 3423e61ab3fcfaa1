#include "kmoco/kernels.hpp"

#include <limits>

namespace kmoco::kernels::serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void conv3x3_forward(const ConvDims& d, const double* x, const double* w, const double* b,
                     double* y) {
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.out_ch; ++o)
      for (long r = 0; r < H; ++r)
        for (long c = 0; c < W; ++c) {
          double s = b[o];
          for (std::size_t i = 0; i < d.in_ch; ++i)
            for (long kr = 0; kr < 3; ++kr)
              for (long kc = 0; kc < 3; ++kc) {
                const long rr = r + kr - 1, cc = c + kc - 1;
                if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
                s += w[((o * d.in_ch + i) * 3 + kr) * 3 + kc] *
                     x[((n * d.in_ch + i) * H + rr) * W + cc];
              }
          y[((n * d.out_ch + o) * H + r) * W + c] = s;
        }
}

void conv3x3_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                      double* dx, double* dw, double* db) {
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const std::size_t wsize = d.out_ch * d.in_ch * 9;
  for (std::size_t i = 0; i < wsize; ++i) dw[i] = 0.0;
  for (std::size_t o = 0; o < d.out_ch; ++o) db[o] = 0.0;
  if (dx)
    for (std::size_t i = 0; i < d.batch * d.in_ch * H * W; ++i) dx[i] = 0.0;

  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.out_ch; ++o)
      for (long r = 0; r < H; ++r)
        for (long c = 0; c < W; ++c) {
          const double g = dy[((n * d.out_ch + o) * H + r) * W + c];
          db[o] += g;
          for (std::size_t i = 0; i < d.in_ch; ++i)
            for (long kr = 0; kr < 3; ++kr)
              for (long kc = 0; kc < 3; ++kc) {
                const long rr = r + kr - 1, cc = c + kc - 1;
                if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
                const std::size_t wi = ((o * d.in_ch + i) * 3 + kr) * 3 + kc;
                const std::size_t xi = ((n * d.in_ch + i) * H + rr) * W + cc;
                dw[wi] += g * x[xi];
                if (dx) dx[xi] += g * w[wi];
              }
        }
}

void nearest_centroid(std::size_t n, std::size_t k, std::size_t d, const double* points,
                      const double* centroids, std::size_t* assign, double* dist) {
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = points[i * d + j] - centroids[c * d + j];
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

}  // namespace kmoco::kernels::serial
