#include "stageskip/kernels.hpp"

#include <cmath>

namespace stageskip::kern {

namespace {

float dot_scalar(const float* a, const float* b, size_t n) {
  float acc = 0.0f;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void matvec_scalar(const float* w, size_t rows, size_t cols, const float* x, float* y) {
  for (size_t r = 0; r < rows; ++r) y[r] = dot_scalar(w + r * cols, x, cols);
}

void axpy_scalar(float a, const float* x, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void rmsnorm_scalar(const float* x, const float* gain, float eps, float* out, size_t n) {
  float ss = 0.0f;
  for (size_t i = 0; i < n; ++i) ss += x[i] * x[i];
  float inv = 1.0f / std::sqrt(ss / static_cast<float>(n) + eps);
  for (size_t i = 0; i < n; ++i) out[i] = x[i] * inv * gain[i];
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{"scalar", dot_scalar, matvec_scalar, axpy_scalar, rmsnorm_scalar};
  return k;
}

double cosine(const float* a, const float* b, size_t n) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return (aa == 0.0 && bb == 0.0) ? 1.0 : 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace stageskip::kern
