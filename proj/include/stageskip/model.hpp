#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stageskip {

struct ModelConfig {
  int n_blocks = 4;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 258;
  int max_seq_len = 1024;
  uint64_t rng_seed = 1;
  bool tied_head = false;  // untied output head by default

  int head_dim() const { return d_model / n_heads; }
  int sublayer_count() const { return 2 * n_blocks; }

  // Throws std::invalid_argument on non-positive dimensions or when n_heads
  // does not divide d_model.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class SubLayerKind : int { Mhsa = 0, Ffn = 1 };

// One MHSA or FFN unit inside a decoder block; the granularity of skipping.
struct SubLayerRef {
  int block = 0;
  SubLayerKind kind = SubLayerKind::Mhsa;

  int ordinal() const { return 2 * block + (kind == SubLayerKind::Ffn ? 1 : 0); }
  static SubLayerRef from_ordinal(int g) {
    return {g / 2, (g % 2) ? SubLayerKind::Ffn : SubLayerKind::Mhsa};
  }

  auto operator<=>(const SubLayerRef&) const = default;
};

const char* to_string(SubLayerKind kind);
SubLayerKind sublayer_kind_from_string(const std::string& s);

// Set of sub-layers to bypass during decode steps. Fixed capacity of
// 2 * n_blocks; O(1) membership.
class SkipSet {
 public:
  SkipSet() = default;
  explicit SkipSet(int sublayer_count) : mask_(sublayer_count, 0) {}

  void insert(SubLayerRef ref);
  bool contains(SubLayerRef ref) const { return contains_ordinal(ref.ordinal()); }
  bool contains_ordinal(int g) const {
    return g >= 0 && g < static_cast<int>(mask_.size()) && mask_[g] != 0;
  }
  int size() const { return count_; }
  bool empty() const { return count_ == 0; }
  int capacity() const { return static_cast<int>(mask_.size()); }
  std::vector<SubLayerRef> members() const;  // sorted by ordinal

  bool operator==(const SkipSet&) const = default;

 private:
  std::vector<char> mask_;
  int count_ = 0;
};

// Per-sequence attention cache. Blocks whose MHSA is being skipped receive no
// writes, so their cached_len can lag behind seq_len.
class KVCache {
 public:
  KVCache() = default;
  explicit KVCache(const ModelConfig& config);

  int seq_len() const { return seq_len_; }
  int cached_len(int block) const { return lens_[block]; }

 private:
  friend class Model;
  std::vector<std::vector<float>> keys_;    // per block, cached_len * d_model
  std::vector<std::vector<float>> values_;  // same layout
  std::vector<int> lens_;
  int seq_len_ = 0;
  int d_model_ = 0;
};

enum class TraceMode { Cosine, Full };

// Residual stream observations from one prefill: for every sub-layer and
// token position, either the cosine between branch output + input and input,
// or the full vectors.
struct ResidualTrace {
  TraceMode mode = TraceMode::Cosine;
  // [sublayer ordinal][position]
  std::vector<std::vector<double>> cosines;
  // Full mode only: [sublayer ordinal][position][d_model]
  std::vector<std::vector<std::vector<float>>> inputs;
  std::vector<std::vector<std::vector<float>>> outputs;
};

struct BlockWeights {
  std::vector<float> attn_norm;  // d_model
  std::vector<float> wq, wk, wv, wo;  // d_model x d_model, row-major
  std::vector<float> ffn_norm;   // d_model
  std::vector<float> w_up;       // d_ff x d_model
  std::vector<float> w_down;     // d_model x d_ff
};

struct StepStats {
  int executed_sublayers = 0;
};

// Decoder-only pre-norm transformer:
//   x <- x + MHSA(rmsnorm(x)), x <- x + FFN(rmsnorm(x))
// with rotary position encoding on q/k and a SiLU feed-forward
// (w_down @ silu(w_up @ x)). Weights are immutable after construction and
// safe to share across threads; each sequence owns its KVCache.
class Model {
 public:
  // Deterministic weights from config.rng_seed: every linear/embedding entry
  // is an independent N(0,1) draw scaled by 1/sqrt(d_model) from a SplitMix64
  // + Box-Muller stream (see docs/FORMATS.md for the draw order); norm gains
  // are 1. Same seed, same weights, bit for bit.
  static Model synthesize(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Runs every sub-layer on every prompt position (no skipping at prefill),
  // filling the cache and optionally the residual trace. Returns logits at
  // the last position. The cache must be fresh. Throws on empty or overlong
  // input.
  std::vector<float> prefill(std::span<const int> tokens, KVCache& cache,
                             ResidualTrace* trace = nullptr) const;

  // One decode step. Sub-layers in `skip` act as the identity on the
  // residual stream: no norm, no branch, and no KV write for a skipped MHSA.
  std::vector<float> decode_step(KVCache& cache, int token, const SkipSet& skip,
                                 StepStats* stats = nullptr) const;

  // Weight access for serialization and for tests that doctor branches.
  std::vector<float>& embedding() { return embedding_; }
  const std::vector<float>& embedding() const { return embedding_; }
  std::vector<BlockWeights>& blocks() { return blocks_; }
  const std::vector<BlockWeights>& blocks() const { return blocks_; }
  std::vector<float>& final_norm() { return final_norm_; }
  const std::vector<float>& final_norm() const { return final_norm_; }
  // Empty when the head is tied to the embedding.
  std::vector<float>& head() { return head_; }
  const std::vector<float>& head() const { return head_; }

  // Uninitialized-weight constructor used by the weight loader.
  static Model with_zero_weights(const ModelConfig& config);

 private:
  explicit Model(const ModelConfig& config);

  std::vector<float> forward_one(int token, int pos, const SkipSet* skip, KVCache& cache,
                                 ResidualTrace* trace, bool want_logits,
                                 StepStats* stats) const;

  ModelConfig config_;
  std::vector<float> embedding_;  // vocab_size x d_model
  std::vector<BlockWeights> blocks_;
  std::vector<float> final_norm_;  // d_model
  std::vector<float> head_;        // vocab_size x d_model (empty if tied)
  std::vector<float> rope_inv_freq_;  // head_dim / 2
};

}  // namespace stageskip
