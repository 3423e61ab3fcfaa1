#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Dense compute kernels behind the autodiff ops, k-means and retrieval.
//
// Two implementations with identical signatures:
//   serial::   straightforward loops, kept as the reference for tests.
//   parallel:: OpenMP + im2col/gemm formulation used by the library.
//
// Every output element of a parallel kernel is produced by exactly one thread
// with a fixed summation order, so results do not depend on the thread count.
// They may differ from the serial reference in the last bits.
namespace kmoco::kernels {

struct ConvDims {
  std::size_t batch = 0, in_ch = 0, out_ch = 0, height = 0, width = 0;
};

#define KMOCO_KERNEL_DECLS                                                                   \
  /* C[m,n] (+)= A[m,k] · B[k,n] */                                                          \
  void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, \
               double* c, bool accumulate);                                                  \
  /* C[m,n] (+)= A[m,k] · B[n,k]ᵀ */                                                         \
  void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, \
               double* c, bool accumulate);                                                  \
  /* C[m,n] (+)= A[k,m]ᵀ · B[k,n] */                                                         \
  void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, \
               double* c, bool accumulate);                                                  \
  /* 3x3, stride 1, pad 1. y:[B,Co,H,W] */                                                   \
  void conv3x3_forward(const ConvDims& d, const double* x, const double* w, const double* b, \
                       double* y);                                                           \
  /* dx, dw, db are overwritten. dx may be null. */                                          \
  void conv3x3_backward(const ConvDims& d, const double* x, const double* w, const double* dy, \
                        double* dx, double* dw, double* db);                                 \
  /* For each of n points (dim d) the index of the nearest of k centroids (squared L2, ties \
     to the lower index) and that distance. */                                               \
  void nearest_centroid(std::size_t n, std::size_t k, std::size_t d, const double* points,   \
                        const double* centroids, std::size_t* assign, double* dist);

namespace serial {
KMOCO_KERNEL_DECLS
}  // namespace serial

namespace parallel {
KMOCO_KERNEL_DECLS
}  // namespace parallel

#undef KMOCO_KERNEL_DECLS

// Caps OpenMP threads used by parallel:: kernels (0 = runtime default).
void set_num_threads(int n);
int max_threads();

}  // namespace kmoco::kernels
