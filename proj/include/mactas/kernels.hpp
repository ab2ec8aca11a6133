#pragma once

#include <cstddef>

// Dense GEMM kernels used by the autodiff layer. Each variant exists twice:
// `serial::` is the plain reference kept for testing, `parallel::` splits the
// output rows across OpenMP threads. Every output element is reduced in the
// same order in both, so results are bitwise identical.
//
// All matrices are row-major. When `accumulate` is false C is overwritten.
namespace mactas::kernels {

namespace serial {
// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
}  // namespace serial

namespace parallel {
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
}  // namespace parallel

// Below this many multiply-adds the parallel variants run on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 18;

// Dispatch used by the rest of the library.
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  parallel::gemm_nn(a, b, c, m, k, n, accumulate);
}
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  parallel::gemm_nt(a, b, c, m, k, n, accumulate);
}
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  parallel::gemm_tn(a, b, c, m, k, n, accumulate);
}

}  // namespace mactas::kernels
