#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "stageskip/early_exit.hpp"
#include "stageskip/rng.hpp"

using namespace stageskip;

TEST_CASE("uniform logits give confidence 1/V") {
  std::vector<float> logits(4, 1.7f);
  CHECK(token_confidence(logits) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("a dominant logit saturates to 1") {
  std::vector<float> logits(10, 0.0f);
  logits[3] = 100.0f;
  CHECK(token_confidence(logits) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("two-way softmax closed form") {
  std::vector<float> logits{1.0f, 0.0f};
  double e = std::exp(1.0);
  CHECK(token_confidence(logits) == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
}

TEST_CASE("non-finite logits are rejected") {
  std::vector<float> logits{1.0f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS(token_confidence(logits));
  logits[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS(token_confidence(logits));
  CHECK_THROWS(max_logit(logits));
}

TEST_CASE("spec window stream exits exactly at step five") {
  ConfidenceCache cache(5, 0.5);
  CHECK(cache.observe(0.9) == ExitDecision::Continue);
  CHECK(cache.observe(0.6) == ExitDecision::Continue);
  CHECK(cache.observe(0.4) == ExitDecision::Continue);
  CHECK(cache.observe(0.3) == ExitDecision::Continue);
  // mean(0.9, 0.6, 0.4, 0.3, 0.2) = 0.48 < 0.5
  CHECK(cache.observe(0.2) == ExitDecision::Exit);
}

TEST_CASE("no exit while the window is still filling") {
  ConfidenceCache cache(5, 0.5);
  for (int i = 0; i < 4; ++i) {
    CHECK(cache.observe(0.4) == ExitDecision::Continue);
  }
  CHECK(cache.observe(0.4) == ExitDecision::Exit);  // fifth observation
}

TEST_CASE("high confidence never exits") {
  ConfidenceCache cache(5, 0.5);
  for (int i = 0; i < 200; ++i) {
    CHECK(cache.observe(1.0) == ExitDecision::Continue);
  }
}

TEST_CASE("reset starts the window over") {
  ConfidenceCache cache(3, 0.5);
  cache.observe(0.1);
  cache.observe(0.1);
  cache.reset();
  CHECK(cache.observe(0.1) == ExitDecision::Continue);
  CHECK(cache.observe(0.1) == ExitDecision::Continue);
  CHECK(cache.observe(0.1) == ExitDecision::Exit);
}

TEST_CASE("exit step matches a sliding-window oracle on random streams") {
  Rng rng(2024);
  const int window = 5;
  const double threshold = 0.5;
  for (int trial = 0; trial < 300; ++trial) {
    size_t len = 1 + rng.next_below(40);
    std::vector<double> stream(len);
    for (double& c : stream) {
      // mix of high and low regimes so both outcomes occur
      c = rng.next_unit() < 0.3 ? 0.6 + 0.4 * rng.next_unit() : rng.next_unit();
    }

    // oracle: first t >= window with mean(last window) < threshold
    int expected_exit = -1;
    for (size_t t = window; t <= len; ++t) {
      double mean = 0.0;
      for (size_t i = t - window; i < t; ++i) mean += stream[i];
      mean /= window;
      if (mean < threshold) {
        expected_exit = static_cast<int>(t);
        break;
      }
    }

    ConfidenceCache cache(window, threshold);
    int actual_exit = -1;
    for (size_t t = 0; t < len; ++t) {
      if (cache.observe(stream[t]) == ExitDecision::Exit) {
        actual_exit = static_cast<int>(t + 1);
        break;
      }
    }
    CHECK(actual_exit == expected_exit);
    if (actual_exit != -1) CHECK(actual_exit >= window);
  }
}
