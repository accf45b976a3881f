#pragma once

#include <stdexcept>
#include <string>

namespace stageskip {

// Deterministic per-token cost model standing in for wall-clock timing in
// tests and CI. Units are arbitrary but fixed; reports label them
// "cost units".
struct LatencyModel {
  double c_prefill = 1.0;  // per prompt token per sub-layer
  double c_base = 4.0;     // fixed cost per decode step
  double c_sub = 1.0;      // per executed sub-layer per decode step

  void validate() const {
    if (c_prefill <= 0.0 || c_base <= 0.0 || c_sub <= 0.0) {
      throw std::invalid_argument("latency model: coefficients must be positive");
    }
  }
};

// One stage's modeled cost:
//   prefill_len * sublayer_count * c_prefill
//     + decode_len * (c_base + active_sublayers * c_sub)
// where active_sublayers = sublayer_count - |skip set|.
inline double modeled_stage_cost(int prefill_len, int decode_len, int active_sublayers,
                                 int sublayer_count, const LatencyModel& lm) {
  return static_cast<double>(prefill_len) * sublayer_count * lm.c_prefill +
         static_cast<double>(decode_len) * (lm.c_base + active_sublayers * lm.c_sub);
}

enum class LatencySource { Wallclock, Modeled };

inline const char* to_string(LatencySource s) {
  return s == LatencySource::Wallclock ? "wallclock" : "model";
}

inline LatencySource latency_source_from_string(const std::string& s) {
  if (s == "wallclock") return LatencySource::Wallclock;
  if (s == "model") return LatencySource::Modeled;
  throw std::invalid_argument("latency source must be 'wallclock' or 'model'");
}

}  // namespace stageskip
