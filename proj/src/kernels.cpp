#include "east/kernels.hpp"

#include <cmath>

namespace east::kernels {

namespace {

inline float row_dot(const float * w, const float * x, size_t cols) {
    float acc = 0.0f;
    for (size_t c = 0; c < cols; ++c) {
        acc += w[c] * x[c];
    }
    return acc;
}

constexpr size_t omp_min_work = 1 << 14;

} // namespace

void matvec_serial(std::span<const float> w, size_t rows, size_t cols, std::span<const float> x, std::span<float> y) {
    for (size_t r = 0; r < rows; ++r) {
        y[r] = row_dot(w.data() + r * cols, x.data(), cols);
    }
}

void matvec_omp(std::span<const float> w, size_t rows, size_t cols, std::span<const float> x, std::span<float> y) {
    const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= omp_min_work)
    for (long r = 0; r < n; ++r) {
        y[r] = row_dot(w.data() + r * cols, x.data(), cols);
    }
}

void matmul_nt_serial(std::span<const float> x, size_t n, std::span<const float> w, size_t rows, size_t cols,
                      std::span<float> y) {
    for (size_t i = 0; i < n; ++i) {
        for (size_t r = 0; r < rows; ++r) {
            y[i * rows + r] = row_dot(w.data() + r * cols, x.data() + i * cols, cols);
        }
    }
}

void matmul_nt_omp(std::span<const float> x, size_t n, std::span<const float> w, size_t rows, size_t cols,
                   std::span<float> y) {
    const auto total = static_cast<long>(n * rows);
#pragma omp parallel for schedule(static) if (n * rows * cols >= omp_min_work)
    for (long idx = 0; idx < total; ++idx) {
        const size_t i = static_cast<size_t>(idx) / rows;
        const size_t r = static_cast<size_t>(idx) % rows;
        y[i * rows + r] = row_dot(w.data() + r * cols, x.data() + i * cols, cols);
    }
}

void layer_norm(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta,
                std::span<float> y, float eps) {
    const size_t d = x.size();
    float mean = 0.0f;
    for (float v : x) {
        mean += v;
    }
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (float v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (size_t i = 0; i < d; ++i) {
        y[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
    }
}

void gelu_inplace(std::span<float> x) {
    constexpr float sqrt_2_over_pi = 0.7978845608028654f;
    constexpr float coeff = 0.044715f;
    for (float & v : x) {
        const float inner = sqrt_2_over_pi * (v + coeff * v * v * v);
        v = 0.5f * v * (1.0f + std::tanh(inner));
    }
}

} // namespace east::kernels
