#pragma once

#include <cstdint>

namespace tsde::counters {

// Call counters backing the inference-cost checks: a reverse step must never
// touch the attention encoders, and generate() must embed exactly once.
extern int64_t embed_calls;
extern int64_t predict_noise_calls;
extern int64_t encoder_layer_calls;

inline void reset() {
  embed_calls = 0;
  predict_noise_calls = 0;
  encoder_layer_calls = 0;
}

}  // namespace tsde::counters
