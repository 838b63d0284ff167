#include "hit/simd.hpp"

namespace hit::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double l2sq_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, const double* x, const double* bias, double* y,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot_scalar(w + r * cols, x, cols) + (bias ? bias[r] : 0.0);
  }
}

void accumulate_f32_scalar(const float* src, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(src[i]);
}

}  // namespace

const Kernels& scalar_kernels() noexcept {
  static const Kernels k{Backend::Scalar, dot_scalar, l2sq_scalar, axpy_scalar,
                         gemv_scalar, accumulate_f32_scalar};
  return k;
}

}  // namespace hit::simd
