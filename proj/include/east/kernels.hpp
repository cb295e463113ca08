#pragma once

// Dense float kernels behind the toy transformer.
//
// Every *_omp kernel computes each output element with exactly the same
// operation order as its *_serial twin; only the assignment of output
// elements to threads differs, so the two are bit-identical. The serial
// versions are the reference used by the tests and the benchmark.

#include <cstddef>
#include <span>

namespace east::kernels {

// y[r] = sum_c W[r * cols + c] * x[c]   (W row-major, rows x cols)
void matvec_serial(std::span<const float> w, size_t rows, size_t cols, std::span<const float> x, std::span<float> y);
void matvec_omp(std::span<const float> w, size_t rows, size_t cols, std::span<const float> x, std::span<float> y);

// row-major (n x cols) input, y = X W^T  -> (n x rows)
void matmul_nt_serial(std::span<const float> x, size_t n, std::span<const float> w, size_t rows, size_t cols,
                      std::span<float> y);
void matmul_nt_omp(std::span<const float> x, size_t n, std::span<const float> w, size_t rows, size_t cols,
                   std::span<float> y);

void layer_norm(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta,
                std::span<float> y, float eps = 1e-5f);

// tanh approximation
void gelu_inplace(std::span<float> x);

} // namespace east::kernels
