#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "stageskip/kernels.hpp"
#include "stageskip/rng.hpp"

using namespace stageskip;

namespace {

std::vector<float> random_vec(Rng& rng, size_t n, float scale = 1.0f) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.next_normal()) * scale;
  return v;
}

}  // namespace

TEST_CASE("scalar dot matches double reference") {
  Rng rng(11);
  const auto& k = kern::scalar_kernels();
  for (size_t n : {1u, 7u, 8u, 64u, 301u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    double expected = 0.0;
    for (size_t i = 0; i < n; ++i) expected += static_cast<double>(a[i]) * b[i];
    CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("avx2 kernels agree with scalar reference") {
  const kern::Kernels* simd = kern::avx2_kernels();
  if (simd == nullptr) {
    MESSAGE("AVX2 not available on this machine; dispatch falls back to scalar");
    CHECK(std::string(kern::active_kernels().name) == "scalar");
    return;
  }
  const auto& ref = kern::scalar_kernels();
  Rng rng(42);

  // odd lengths exercise the remainder tails
  for (size_t n : {1u, 3u, 8u, 15u, 16u, 17u, 63u, 64u, 65u, 257u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);

    float d_ref = ref.dot(a.data(), b.data(), n);
    float d_simd = simd->dot(a.data(), b.data(), n);
    CHECK(std::abs(d_ref - d_simd) <= 1e-4f * (1.0f + std::abs(d_ref)));

    auto y_ref = random_vec(rng, n);
    auto y_simd = y_ref;
    ref.axpy(0.37f, a.data(), y_ref.data(), n);
    simd->axpy(0.37f, a.data(), y_simd.data(), n);
    for (size_t i = 0; i < n; ++i) {
      CHECK(y_ref[i] == doctest::Approx(y_simd[i]).epsilon(1e-5));
    }

    auto gain = random_vec(rng, n, 0.5f);
    std::vector<float> out_ref(n), out_simd(n);
    ref.rmsnorm(a.data(), gain.data(), 1e-5f, out_ref.data(), n);
    simd->rmsnorm(a.data(), gain.data(), 1e-5f, out_simd.data(), n);
    for (size_t i = 0; i < n; ++i) {
      CHECK(out_ref[i] == doctest::Approx(out_simd[i]).epsilon(1e-4));
    }
  }

  for (auto [rows, cols] : {std::pair<size_t, size_t>{4, 9}, {16, 64}, {33, 127}}) {
    auto w = random_vec(rng, rows * cols);
    auto x = random_vec(rng, cols);
    std::vector<float> y_ref(rows), y_simd(rows);
    ref.matvec(w.data(), rows, cols, x.data(), y_ref.data());
    simd->matvec(w.data(), rows, cols, x.data(), y_simd.data());
    for (size_t i = 0; i < rows; ++i) {
      CHECK(std::abs(y_ref[i] - y_simd[i]) <= 1e-4f * (1.0f + std::abs(y_ref[i])));
    }
  }
}

TEST_CASE("cosine of a vector with itself is exactly one") {
  Rng rng(3);
  for (size_t n : {2u, 5u, 64u}) {
    auto a = random_vec(rng, n);
    CHECK(kern::cosine(a.data(), a.data(), n) == 1.0);
    auto b = a;  // bitwise equal copy
    CHECK(kern::cosine(a.data(), b.data(), n) == 1.0);
  }
}

TEST_CASE("cosine handles orthogonal and zero inputs") {
  std::vector<float> x{1.0f, 0.0f};
  std::vector<float> y{0.0f, 1.0f};
  CHECK(kern::cosine(x.data(), y.data(), 2) == 0.0);
  std::vector<float> z{0.0f, 0.0f};
  CHECK(kern::cosine(z.data(), z.data(), 2) == 1.0);
  CHECK(kern::cosine(x.data(), z.data(), 2) == 0.0);
}

TEST_CASE("rmsnorm scales to unit rms") {
  const auto& k = kern::scalar_kernels();
  std::vector<float> x{3.0f, 4.0f};
  std::vector<float> gain{1.0f, 1.0f};
  std::vector<float> out(2);
  k.rmsnorm(x.data(), gain.data(), 0.0f, out.data(), 2);
  // rms = sqrt((9+16)/2) = sqrt(12.5)
  CHECK(out[0] == doctest::Approx(3.0 / std::sqrt(12.5)).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(4.0 / std::sqrt(12.5)).epsilon(1e-6));
}
