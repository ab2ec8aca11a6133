#include "mactas/kernels.hpp"

#include <algorithm>
#include <vector>

namespace mactas::kernels {
namespace {

// Block kernels shared by both variants: each call owns rows [i0, i0 + rows) of
// C, with rows <= kBlock. Only the loop over row blocks differs between the
// serial and the OpenMP versions, so both produce bitwise-identical results.
constexpr std::size_t kBlock = 4;

inline std::size_t block_rows(std::size_t i0, std::size_t m) { return std::min(kBlock, m - i0); }

// C[r][j0 .. j0 + kCols) for the four rows of a block, accumulated in
// registers over the whole k loop. `a_at(r, p)` reads A's element for row r.
constexpr std::size_t kCols = 16;

template <class AAt>
inline void tile_4x16(AAt a_at, const double* b, double* c0, std::size_t j0, std::size_t k, std::size_t n) {
  double acc[kBlock][kCols];
  for (std::size_t r = 0; r < kBlock; ++r)
    for (std::size_t j = 0; j < kCols; ++j) acc[r][j] = c0[r * n + j0 + j];
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n + j0;
    for (std::size_t r = 0; r < kBlock; ++r) {
      const double s = a_at(r, p);
#pragma omp simd
      for (std::size_t j = 0; j < kCols; ++j) acc[r][j] += s * bp[j];
    }
  }
  for (std::size_t r = 0; r < kBlock; ++r)
    for (std::size_t j = 0; j < kCols; ++j) c0[r * n + j0 + j] = acc[r][j];
}

// Columns [j0, n) of a block row by row.
template <class AAt>
inline void tail_columns(AAt a_at, const double* b, double* c0, std::size_t rows, std::size_t j0, std::size_t k,
                         std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* cr = c0 + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a_at(r, p);
      const double* bp = b + p * n;
#pragma omp simd
      for (std::size_t j = j0; j < n; ++j) cr[j] += s * bp[j];
    }
  }
}

template <class AAt>
inline void block_generic(AAt a_at, const double* b, double* c, std::size_t i0, std::size_t m, std::size_t k,
                          std::size_t n, bool accumulate) {
  const std::size_t rows = block_rows(i0, m);
  double* c0 = c + i0 * n;
  if (!accumulate) std::fill(c0, c0 + rows * n, 0.0);
  std::size_t j0 = 0;
  if (rows == kBlock)
    for (; j0 + kCols <= n; j0 += kCols) tile_4x16(a_at, b, c0, j0, k, n);
  if (j0 < n) tail_columns(a_at, b, c0, rows, j0, k, n);
}

void block_nn(const double* a, const double* b, double* c, std::size_t i0, std::size_t m, std::size_t k,
              std::size_t n, bool accumulate) {
  const double* a0 = a + i0 * k;
  block_generic([a0, k](std::size_t r, std::size_t p) { return a0[r * k + p]; }, b, c, i0, m, k, n, accumulate);
}

void block_tn(const double* a, const double* b, double* c, std::size_t i0, std::size_t m, std::size_t k,
              std::size_t n, bool accumulate) {
  const double* a0 = a + i0;
  block_generic([a0, m](std::size_t r, std::size_t p) { return a0[p * m + r]; }, b, c, i0, m, k, n, accumulate);
}

using BlockFn = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t,
                         std::size_t, bool);

void run_serial(BlockFn f, const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate) {
  for (std::size_t i0 = 0; i0 < m; i0 += kBlock) f(a, b, c, i0, m, k, n, accumulate);
}

void run_parallel(BlockFn f, const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  const bool big = m * k * n >= kParallelThreshold;
  const auto blocks = static_cast<long>((m + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (big)
  for (long blk = 0; blk < blocks; ++blk) f(a, b, c, static_cast<std::size_t>(blk) * kBlock, m, k, n, accumulate);
}

// B (n x k) -> B^T (k x n), so A B^T can reuse the streaming nn kernel.
const double* transpose_into(const double* b, std::size_t n, std::size_t k, std::vector<double>& buf) {
  buf.resize(n * k);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) buf[p * n + j] = b[j * k + p];
  return buf.data();
}

thread_local std::vector<double> transpose_buffer;

}  // namespace

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  run_serial(block_nn, a, b, c, m, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  run_serial(block_nn, a, transpose_into(b, n, k, transpose_buffer), c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  run_serial(block_tn, a, b, c, m, k, n, accumulate);
}

}  // namespace serial

namespace parallel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  run_parallel(block_nn, a, b, c, m, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  run_parallel(block_nn, a, transpose_into(b, n, k, transpose_buffer), c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  run_parallel(block_tn, a, b, c, m, k, n, accumulate);
}

}  // namespace parallel
}  // namespace mactas::kernels
