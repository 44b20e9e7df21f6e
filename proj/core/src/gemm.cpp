#include "gemm.hpp"

#include <algorithm>
#include <vector>

namespace lowlight::engine::detail {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 64;

// Full 4 x 64 tile of C held in a local accumulator across the whole K loop.
inline void tile_4x64(std::size_t n, std::size_t k, const float* a,
                      const float* b, float* c) {
  alignas(64) float acc[kRowBlock][kColBlock];
  for (std::size_t r = 0; r < kRowBlock; ++r) {
    for (std::size_t j = 0; j < kColBlock; ++j) acc[r][j] = c[r * n + j];
  }
  for (std::size_t p = 0; p < k; ++p) {
    const float* brow = b + p * n;
    const float a0 = a[p];
    const float a1 = a[k + p];
    const float a2 = a[2 * k + p];
    const float a3 = a[3 * k + p];
    for (std::size_t j = 0; j < kColBlock; ++j) {
      const float bv = brow[j];
      acc[0][j] += a0 * bv;
      acc[1][j] += a1 * bv;
      acc[2][j] += a2 * bv;
      acc[3][j] += a3 * bv;
    }
  }
  for (std::size_t r = 0; r < kRowBlock; ++r) {
    for (std::size_t j = 0; j < kColBlock; ++j) c[r * n + j] = acc[r][j];
  }
}

inline void edge(std::size_t rows, std::size_t cols, std::size_t n,
                 std::size_t k, const float* a, const float* b, float* c) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* crow = c + r * n;
    const float* arow = a + r * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             const float* b, float* c) {
  const std::size_t m_full = m - m % kRowBlock;
  const std::size_t n_full = n - n % kColBlock;
  for (std::size_t j0 = 0; j0 < n_full; j0 += kColBlock) {
    for (std::size_t i = 0; i < m_full; i += kRowBlock) {
      tile_4x64(n, k, a + i * k, b + j0, c + i * n + j0);
    }
    if (m_full < m) {
      edge(m - m_full, kColBlock, n, k, a + m_full * k, b + j0,
           c + m_full * n + j0);
    }
  }
  if (n_full < n) {
    edge(m, n - n_full, n, k, a, b + n_full, c + n_full);
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
             const float* b, float* c) {
  // Transpose B once so the product runs through the tiled NN kernel.
  thread_local std::vector<float> bt;
  bt.resize(n * k);
  constexpr std::size_t kBlock = 32;
  for (std::size_t q0 = 0; q0 < k; q0 += kBlock) {
    const std::size_t q1 = std::min(k, q0 + kBlock);
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t j1 = std::min(n, j0 + kBlock);
      for (std::size_t q = q0; q < q1; ++q) {
        for (std::size_t j = j0; j < j1; ++j) bt[j * k + q] = b[q * n + j];
      }
    }
  }
  gemm_nn(m, k, n, a, bt.data(), c);
}

}  // namespace lowlight::engine::detail
