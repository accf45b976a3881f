#include "stageskip/early_exit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stageskip {

double token_confidence(std::span<const float> logits) {
  if (logits.empty()) throw std::invalid_argument("token_confidence: empty logits");
  double zmax = logits[0];
  for (float z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("token_confidence: non-finite logit");
    zmax = std::max(zmax, static_cast<double>(z));
  }
  double denom = 0.0;
  for (float z : logits) denom += std::exp(static_cast<double>(z) - zmax);
  return 1.0 / denom;  // exp(zmax - zmax) / denom
}

double max_logit(std::span<const float> logits) {
  if (logits.empty()) throw std::invalid_argument("max_logit: empty logits");
  double zmax = logits[0];
  for (float z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("max_logit: non-finite logit");
    zmax = std::max(zmax, static_cast<double>(z));
  }
  return zmax;
}

ConfidenceCache::ConfidenceCache(int window_n, double threshold)
    : window_n_(window_n), threshold_(threshold) {
  if (window_n <= 0) throw std::invalid_argument("confidence cache: window must be positive");
  ring_.reserve(window_n);
}

void ConfidenceCache::reset() {
  ring_.clear();
  steps_seen_ = 0;
}

double ConfidenceCache::window_mean() const {
  if (ring_.empty()) return 0.0;
  double sum = 0.0;
  for (double c : ring_) sum += c;
  return sum / static_cast<double>(ring_.size());
}

ExitDecision ConfidenceCache::observe(double confidence) {
  if (static_cast<int>(ring_.size()) == window_n_) {
    // evict oldest: ring_ is kept in arrival order, front is oldest
    ring_.erase(ring_.begin());
  }
  ring_.push_back(confidence);
  ++steps_seen_;
  if (steps_seen_ >= window_n_ && window_mean() < threshold_) return ExitDecision::Exit;
  return ExitDecision::Continue;
}

}  // namespace stageskip
