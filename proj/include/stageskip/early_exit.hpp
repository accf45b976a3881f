#pragma once

#include <span>
#include <vector>

namespace stageskip {

enum class ExitDecision { Continue, Exit };

// Maximum post-softmax probability of the next token, in [0, 1]. Computed in
// double so the value does not depend on the selected kernel ISA. Throws on
// non-finite logits.
double token_confidence(std::span<const float> logits);

// Raw maximum logit, for the unnormalized-confidence mode.
double max_logit(std::span<const float> logits);

// Ring buffer of the most recent window_n token confidences. Once the window
// has filled, a mean below the threshold asks the caller to emit EOS instead
// of the sampled token. Never signals Exit before window_n observations.
class ConfidenceCache {
 public:
  explicit ConfidenceCache(int window_n = 5, double threshold = 0.5);

  ExitDecision observe(double confidence);
  void reset();

  int window() const { return window_n_; }
  double threshold() const { return threshold_; }
  long steps_seen() const { return steps_seen_; }
  // Mean over the current ring contents.
  double window_mean() const;

 private:
  std::vector<double> ring_;
  int window_n_;
  double threshold_;
  long steps_seen_ = 0;
};

}  // namespace stageskip
