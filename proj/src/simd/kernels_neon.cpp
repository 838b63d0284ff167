// aarch64 only; Advanced SIMD is mandatory there, so no runtime check.
#include <arm_neon.h>

#include "hit/simd.hpp"

namespace hit::simd {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(a + i), vld1q_f64(b + i));
    s1 = vfmaq_f64(s1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double l2sq_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    s0 = vfmaq_f64(s0, d, d);
  }
  double s = vaddvq_f64(s0);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_neon(const double* w, const double* x, const double* bias, double* y,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot_neon(w + r * cols, x, cols) + (bias ? bias[r] : 0.0);
  }
}

void accumulate_f32_neon(const float* src, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t v = vcvt_f64_f32(vld1_f32(src + i));
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), v));
  }
  for (; i < n; ++i) acc[i] += static_cast<double>(src[i]);
}

}  // namespace

const Kernels* neon_kernels_unchecked() noexcept {
  static const Kernels k{Backend::Neon, dot_neon, l2sq_neon, axpy_neon, gemv_neon,
                         accumulate_f32_neon};
  return &k;
}

}  // namespace hit::simd
