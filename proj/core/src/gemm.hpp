#pragma once

#include <cstddef>

namespace lowlight::engine::detail {

// Row-major single-precision kernels used by the lowered convolution.
// All of them accumulate into C.

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             const float* b, float* c);

// C[M,K] += A[M,N] * B[K,N]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
             const float* b, float* c);

}  // namespace lowlight::engine::detail
