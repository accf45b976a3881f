#pragma once

// InferenceBackend stand-in that emits scripted token streams with exact
// confidences, for driving pipeline and evaluation logic without a real
// model. A rule matches when its substring appears in the decoded prompt;
// the first match wins.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "stageskip/pipeline.hpp"
#include "stageskip/tokenizer.hpp"

namespace testsupport {

using stageskip::ByteTokenizer;

struct ScriptRule {
  std::string prompt_contains;  // empty matches everything
  std::string emit_text;        // one byte token per decode step
  bool end_with_eos = true;
  std::vector<double> confidences;  // per step; repeats the last entry when short
  double default_confidence = 0.9;
};

class ScriptedBackend : public stageskip::InferenceBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules, int sublayers = 8,
                           int max_seq = 100000)
      : rules_(std::move(rules)), sublayers_(sublayers), max_seq_(max_seq) {}

  std::unique_ptr<stageskip::SequenceSession> start_sequence() const override;
  int vocab_size() const override { return ByteTokenizer::kVocabSize; }
  int sublayer_count() const override { return sublayers_; }
  int max_seq_len() const override { return max_seq_; }

  // Logits whose max softmax probability is exactly `confidence` and whose
  // argmax is `token`: logits[token] = ln(c (V-1) / (1 - c)), zero elsewhere.
  static std::vector<float> logits_for(int token, double confidence) {
    const int v = ByteTokenizer::kVocabSize;
    std::vector<float> logits(v, 0.0f);
    double c = std::min(std::max(confidence, 1.0 / v + 1e-6), 1.0 - 1e-9);
    logits[token] = static_cast<float>(std::log(c * (v - 1) / (1.0 - c)));
    return logits;
  }

 private:
  friend class ScriptedSession;
  std::vector<ScriptRule> rules_;
  int sublayers_;
  int max_seq_;
};

class ScriptedSession : public stageskip::SequenceSession {
 public:
  explicit ScriptedSession(const ScriptedBackend& backend) : backend_(backend) {}

  std::vector<float> prefill(std::span<const int> tokens) override {
    std::string prompt = ByteTokenizer::decode(tokens);
    const ScriptRule* rule = nullptr;
    for (const ScriptRule& r : backend_.rules_) {
      if (r.prompt_contains.empty() || prompt.find(r.prompt_contains) != std::string::npos) {
        rule = &r;
        break;
      }
    }
    queue_.clear();
    confidences_.clear();
    if (rule != nullptr) {
      for (unsigned char c : rule->emit_text) queue_.push_back(static_cast<int>(c));
      if (rule->end_with_eos) queue_.push_back(ByteTokenizer::kEos);
      for (size_t i = 0; i < queue_.size(); ++i) {
        confidences_.push_back(i < rule->confidences.size()
                                   ? rule->confidences[i]
                                   : (rule->confidences.empty() ? rule->default_confidence
                                                                : rule->confidences.back()));
      }
    }
    next_ = 0;
    return current_logits();
  }

  std::vector<float> step(int /*token*/, const stageskip::SkipSet& /*skip*/) override {
    ++next_;
    return current_logits();
  }

 private:
  std::vector<float> current_logits() {
    if (next_ < queue_.size()) {
      return ScriptedBackend::logits_for(queue_[next_], confidences_[next_]);
    }
    return ScriptedBackend::logits_for(ByteTokenizer::kEos, 0.99);
  }

  const ScriptedBackend& backend_;
  std::vector<int> queue_;
  std::vector<double> confidences_;
  size_t next_ = 0;
};

inline std::unique_ptr<stageskip::SequenceSession> ScriptedBackend::start_sequence() const {
  return std::make_unique<ScriptedSession>(*this);
}

}  // namespace testsupport
