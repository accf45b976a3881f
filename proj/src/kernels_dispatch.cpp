#include "stageskip/kernels.hpp"

#include <cstdlib>

namespace stageskip::kern {

#if STAGESKIP_HAVE_AVX2
const Kernels* avx2_kernels_impl();
#endif

const Kernels* avx2_kernels() {
#if STAGESKIP_HAVE_AVX2
  static const Kernels* table = [] {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")
               ? avx2_kernels_impl()
               : nullptr;
  }();
  return table;
#else
  return nullptr;
#endif
}

const Kernels& active_kernels() {
  static const Kernels* selected = [] {
    const char* force = std::getenv("STAGESKIP_FORCE_SCALAR");
    if (force != nullptr && force[0] != '\0' && force[0] != '0') return &scalar_kernels();
    if (const Kernels* v = avx2_kernels()) return v;
    return &scalar_kernels();
  }();
  return *selected;
}

}  // namespace stageskip::kern
