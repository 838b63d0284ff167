#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// where the CPU supports it, a vector version picked once at startup. The
// vector versions reorder floating-point sums, so results agree with the
// reference to rounding, not bit-for-bit; a given backend is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace hit::simd {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend backend) noexcept;

struct Kernels {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*l2sq)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x + bias, W row-major rows x cols; bias may be null
  void (*gemv)(const double* w, const double* x, const double* bias, double* y,
               std::size_t rows, std::size_t cols);
  // acc += src, widening float to double
  void (*accumulate_f32)(const float* src, double* acc, std::size_t n);
};

const Kernels& scalar_kernels() noexcept;
/// Null when not compiled in or not supported by the running CPU.
const Kernels* avx2_kernels() noexcept;
const Kernels* neon_kernels() noexcept;

/// Backend in use. Chosen on first call: best supported, unless the
/// HIT_SIMD environment variable names one ("scalar", "avx2", "neon").
const Kernels& active() noexcept;

/// Overrides the active backend; returns false if it is unavailable.
bool select(Backend backend) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double l2sq(std::span<const double> a, std::span<const double> b) {
  return active().l2sq(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace hit::simd
