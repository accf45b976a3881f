#pragma once

#include <cstddef>

namespace stageskip::kern {

// Dense float kernels used by the transformer forward pass. Each entry has a
// scalar reference implementation and, where the CPU supports it, an AVX2+FMA
// variant selected once at startup. Accumulation order differs between
// variants, so results agree to rounding, not bitwise; everything downstream
// of a single selected table is deterministic.
struct Kernels {
  const char* name;
  // dot(a, b) over n floats.
  float (*dot)(const float* a, const float* b, size_t n);
  // y = W x with W row-major (rows x cols).
  void (*matvec)(const float* w, size_t rows, size_t cols, const float* x, float* y);
  // y += a * x over n floats.
  void (*axpy)(float a, const float* x, float* y, size_t n);
  // out = x / rms(x) * gain, rms computed with epsilon inside the sqrt.
  void (*rmsnorm)(const float* x, const float* gain, float eps, float* out, size_t n);
};

const Kernels& scalar_kernels();

// Null when the build lacks AVX2 support or the CPU does not report it.
const Kernels* avx2_kernels();

// Table picked at first use: AVX2 when available unless STAGESKIP_FORCE_SCALAR
// is set in the environment.
const Kernels& active_kernels();

// Cosine similarity with double accumulation. Kept scalar on purpose: it is
// an offline statistic, and cos(x, x) must come out exactly 1.0 for bitwise
// equal inputs, which the shared-summation-order argument below guarantees:
// dot(a,b), dot(a,a), dot(b,b) run the identical loop, so equal inputs give
// equal sums and the quotient collapses to 1.
double cosine(const float* a, const float* b, size_t n);

}  // namespace stageskip::kern
