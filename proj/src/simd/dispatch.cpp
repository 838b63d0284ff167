#include <atomic>
#include <cstdlib>
#include <string>

#include "hit/simd.hpp"

namespace hit::simd {

#if defined(HIT_HAVE_AVX2)
const Kernels* avx2_kernels_unchecked() noexcept;
#endif
#if defined(HIT_HAVE_NEON)
const Kernels* neon_kernels_unchecked() noexcept;
#endif

std::string_view backend_name(Backend backend) noexcept {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

const Kernels* avx2_kernels() noexcept {
#if defined(HIT_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? avx2_kernels_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const Kernels* neon_kernels() noexcept {
#if defined(HIT_HAVE_NEON)
  return neon_kernels_unchecked();
#else
  return nullptr;
#endif
}

namespace {

const Kernels* pick_default() noexcept {
  if (const char* env = std::getenv("HIT_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels()) return avx2_kernels();
    if (want == "neon" && neon_kernels()) return neon_kernels();
  }
  if (const Kernels* k = avx2_kernels()) return k;
  if (const Kernels* k = neon_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() noexcept {
  static std::atomic<const Kernels*> current{pick_default()};
  return current;
}

}  // namespace

const Kernels& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool select(Backend backend) noexcept {
  const Kernels* k = nullptr;
  switch (backend) {
    case Backend::Scalar: k = &scalar_kernels(); break;
    case Backend::Avx2: k = avx2_kernels(); break;
    case Backend::Neon: k = neon_kernels(); break;
  }
  if (!k) return false;
  slot().store(k, std::memory_order_release);
  return true;
}

}  // namespace hit::simd
