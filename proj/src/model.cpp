#include "stageskip/model.hpp"

#include <cmath>
#include <stdexcept>

#include "stageskip/errors.hpp"
#include "stageskip/kernels.hpp"
#include "stageskip/rng.hpp"

namespace stageskip {

namespace {
constexpr float kNormEps = 1e-5f;

inline float silu(float z) { return z / (1.0f + std::exp(-z)); }
}  // namespace

void ModelConfig::validate() const {
  if (n_blocks <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || vocab_size <= 0 ||
      max_seq_len <= 0) {
    throw std::invalid_argument("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model config: n_heads must divide d_model");
  }
}

const char* to_string(SubLayerKind kind) {
  return kind == SubLayerKind::Mhsa ? "mhsa" : "ffn";
}

SubLayerKind sublayer_kind_from_string(const std::string& s) {
  if (s == "mhsa") return SubLayerKind::Mhsa;
  if (s == "ffn") return SubLayerKind::Ffn;
  throw UserError("unknown sub-layer kind: " + s);
}

void SkipSet::insert(SubLayerRef ref) {
  int g = ref.ordinal();
  if (g < 0 || g >= static_cast<int>(mask_.size())) {
    throw std::invalid_argument("skip set: sub-layer ordinal out of range");
  }
  if (!mask_[g]) {
    mask_[g] = 1;
    ++count_;
  }
}

std::vector<SubLayerRef> SkipSet::members() const {
  std::vector<SubLayerRef> out;
  out.reserve(count_);
  for (int g = 0; g < static_cast<int>(mask_.size()); ++g) {
    if (mask_[g]) out.push_back(SubLayerRef::from_ordinal(g));
  }
  return out;
}

KVCache::KVCache(const ModelConfig& config)
    : keys_(config.n_blocks),
      values_(config.n_blocks),
      lens_(config.n_blocks, 0),
      d_model_(config.d_model) {
  for (int b = 0; b < config.n_blocks; ++b) {
    keys_[b].reserve(static_cast<size_t>(config.max_seq_len) * config.d_model);
    values_[b].reserve(static_cast<size_t>(config.max_seq_len) * config.d_model);
  }
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  int hd = config_.head_dim();
  rope_inv_freq_.resize(hd / 2);
  for (int i = 0; i < hd / 2; ++i) {
    rope_inv_freq_[i] = static_cast<float>(std::pow(10000.0, -2.0 * i / hd));
  }
}

Model Model::with_zero_weights(const ModelConfig& config) {
  Model m(config);
  size_t d = config.d_model;
  m.embedding_.assign(static_cast<size_t>(config.vocab_size) * d, 0.0f);
  m.blocks_.resize(config.n_blocks);
  for (auto& b : m.blocks_) {
    b.attn_norm.assign(d, 1.0f);
    b.wq.assign(d * d, 0.0f);
    b.wk.assign(d * d, 0.0f);
    b.wv.assign(d * d, 0.0f);
    b.wo.assign(d * d, 0.0f);
    b.ffn_norm.assign(d, 1.0f);
    b.w_up.assign(static_cast<size_t>(config.d_ff) * d, 0.0f);
    b.w_down.assign(d * static_cast<size_t>(config.d_ff), 0.0f);
  }
  m.final_norm_.assign(d, 1.0f);
  if (!config.tied_head) m.head_.assign(static_cast<size_t>(config.vocab_size) * d, 0.0f);
  return m;
}

Model Model::synthesize(const ModelConfig& config) {
  Model m = with_zero_weights(config);
  Rng rng(config.rng_seed);
  float scale = 1.0f / std::sqrt(static_cast<float>(config.d_model));
  auto fill = [&](std::vector<float>& w) {
    for (float& v : w) v = static_cast<float>(rng.next_normal()) * scale;
  };
  fill(m.embedding_);
  for (auto& b : m.blocks_) {
    fill(b.wq);
    fill(b.wk);
    fill(b.wv);
    fill(b.wo);
    fill(b.w_up);
    fill(b.w_down);
  }
  if (!config.tied_head) fill(m.head_);
  return m;
}

// Processes a single token at absolute position `pos`. Prefill and decode
// share this path so incremental decoding is bit-identical to reprocessing
// the whole sequence.
std::vector<float> Model::forward_one(int token, int pos, const SkipSet* skip, KVCache& cache,
                                      ResidualTrace* trace, bool want_logits,
                                      StepStats* stats) const {
  const auto& kk = kern::active_kernels();
  const int d = config_.d_model;
  const int hd = config_.head_dim();
  const int heads = config_.n_heads;

  if (token < 0 || token >= config_.vocab_size) {
    throw std::invalid_argument("token id out of vocabulary range");
  }
  if (pos >= config_.max_seq_len) {
    throw UserError("sequence exceeds max_seq_len");
  }

  std::vector<float> x(embedding_.begin() + static_cast<size_t>(token) * d,
                       embedding_.begin() + static_cast<size_t>(token + 1) * d);
  std::vector<float> xn(d), q(d), k(d), v(d), attn(d);
  std::vector<float> ffn_hidden(config_.d_ff), ffn_out(d);

  auto record = [&](int ordinal, const std::vector<float>& input,
                    const std::vector<float>& output) {
    if (trace == nullptr) return;
    if (trace->mode == TraceMode::Cosine) {
      trace->cosines[ordinal].push_back(kern::cosine(output.data(), input.data(), d));
    } else {
      trace->inputs[ordinal].push_back(input);
      trace->outputs[ordinal].push_back(output);
    }
  };

  for (int b = 0; b < config_.n_blocks; ++b) {
    const BlockWeights& bw = blocks_[b];

    // MHSA sub-layer
    if (skip == nullptr || !skip->contains_ordinal(2 * b)) {
      kk.rmsnorm(x.data(), bw.attn_norm.data(), kNormEps, xn.data(), d);
      kk.matvec(bw.wq.data(), d, d, xn.data(), q.data());
      kk.matvec(bw.wk.data(), d, d, xn.data(), k.data());
      kk.matvec(bw.wv.data(), d, d, xn.data(), v.data());

      // Rotary encoding on q/k, pairwise (2i, 2i+1) within each head.
      for (int h = 0; h < heads; ++h) {
        float* qh = q.data() + h * hd;
        float* kh = k.data() + h * hd;
        for (int i = 0; i < hd / 2; ++i) {
          double angle = static_cast<double>(pos) * rope_inv_freq_[i];
          float c = static_cast<float>(std::cos(angle));
          float s = static_cast<float>(std::sin(angle));
          float q0 = qh[2 * i], q1 = qh[2 * i + 1];
          qh[2 * i] = q0 * c - q1 * s;
          qh[2 * i + 1] = q0 * s + q1 * c;
          float k0 = kh[2 * i], k1 = kh[2 * i + 1];
          kh[2 * i] = k0 * c - k1 * s;
          kh[2 * i + 1] = k0 * s + k1 * c;
        }
      }

      auto& kcache = cache.keys_[b];
      auto& vcache = cache.values_[b];
      kcache.insert(kcache.end(), k.begin(), k.end());
      vcache.insert(vcache.end(), v.begin(), v.end());
      cache.lens_[b] += 1;
      const int n_ctx = cache.lens_[b];

      std::vector<float> scores(n_ctx);
      std::vector<float> head_out(d, 0.0f);
      const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));
      for (int h = 0; h < heads; ++h) {
        const float* qh = q.data() + h * hd;
        for (int i = 0; i < n_ctx; ++i) {
          scores[i] = kk.dot(qh, kcache.data() + static_cast<size_t>(i) * d + h * hd, hd) *
                      inv_sqrt_hd;
        }
        // softmax over the cached context, double accumulation
        float smax = scores[0];
        for (int i = 1; i < n_ctx; ++i) smax = std::max(smax, scores[i]);
        double denom = 0.0;
        for (int i = 0; i < n_ctx; ++i) denom += std::exp(static_cast<double>(scores[i] - smax));
        for (int i = 0; i < n_ctx; ++i) {
          float p = static_cast<float>(std::exp(static_cast<double>(scores[i] - smax)) / denom);
          kk.axpy(p, vcache.data() + static_cast<size_t>(i) * d + h * hd, head_out.data() + h * hd,
                  hd);
        }
      }
      kk.matvec(bw.wo.data(), d, d, head_out.data(), attn.data());

      if (trace != nullptr) {
        std::vector<float> out(d);
        for (int i = 0; i < d; ++i) out[i] = x[i] + attn[i];
        record(2 * b, x, out);
        x = std::move(out);
      } else {
        kk.axpy(1.0f, attn.data(), x.data(), d);
      }
      if (stats != nullptr) stats->executed_sublayers += 1;
    }

    // FFN sub-layer
    if (skip == nullptr || !skip->contains_ordinal(2 * b + 1)) {
      kk.rmsnorm(x.data(), bw.ffn_norm.data(), kNormEps, xn.data(), d);
      kk.matvec(bw.w_up.data(), config_.d_ff, d, xn.data(), ffn_hidden.data());
      for (int i = 0; i < config_.d_ff; ++i) ffn_hidden[i] = silu(ffn_hidden[i]);
      kk.matvec(bw.w_down.data(), d, config_.d_ff, ffn_hidden.data(), ffn_out.data());

      if (trace != nullptr) {
        std::vector<float> out(d);
        for (int i = 0; i < d; ++i) out[i] = x[i] + ffn_out[i];
        record(2 * b + 1, x, out);
        x = std::move(out);
      } else {
        kk.axpy(1.0f, ffn_out.data(), x.data(), d);
      }
      if (stats != nullptr) stats->executed_sublayers += 1;
    }
  }

  cache.seq_len_ += 1;

  if (!want_logits) return {};
  std::vector<float> normed(d);
  kk.rmsnorm(x.data(), final_norm_.data(), kNormEps, normed.data(), d);
  std::vector<float> logits(config_.vocab_size);
  const float* head_w = config_.tied_head ? embedding_.data() : head_.data();
  kk.matvec(head_w, config_.vocab_size, d, normed.data(), logits.data());
  for (float l : logits) {
    if (!std::isfinite(l)) throw std::runtime_error("non-finite logits");
  }
  return logits;
}

std::vector<float> Model::prefill(std::span<const int> tokens, KVCache& cache,
                                  ResidualTrace* trace) const {
  if (tokens.empty()) throw std::invalid_argument("prefill: empty token sequence");
  if (static_cast<int>(tokens.size()) > config_.max_seq_len) {
    throw UserError("prefill: input longer than max_seq_len");
  }
  if (cache.seq_len_ != 0) throw std::invalid_argument("prefill: cache already populated");
  if (cache.lens_.empty()) cache = KVCache(config_);

  if (trace != nullptr) {
    int n = config_.sublayer_count();
    trace->cosines.assign(n, {});
    trace->inputs.assign(n, {});
    trace->outputs.assign(n, {});
  }

  std::vector<float> logits;
  for (size_t p = 0; p < tokens.size(); ++p) {
    bool last = (p + 1 == tokens.size());
    logits = forward_one(tokens[p], static_cast<int>(p), nullptr, cache, trace, last, nullptr);
  }
  return logits;
}

std::vector<float> Model::decode_step(KVCache& cache, int token, const SkipSet& skip,
                                      StepStats* stats) const {
  if (cache.lens_.empty()) throw std::invalid_argument("decode_step: uninitialized cache");
  if (skip.capacity() != 0 && skip.capacity() != config_.sublayer_count()) {
    throw std::invalid_argument("decode_step: skip set sized for a different model");
  }
  return forward_one(token, cache.seq_len_, &skip, cache, nullptr, true, stats);
}

}  // namespace stageskip
