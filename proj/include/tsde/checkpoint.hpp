#pragma once

#include <string>

#include "tsde/data.hpp"
#include "tsde/trainer.hpp"

namespace tsde {

// Versioned binary archive of named f64 tensors plus a JSON metadata manifest:
// model/train config snapshot, epoch counter, optimizer moments and rng state,
// so a reloaded run continues bitwise-identically. The training-split
// normalizer rides along so inference applies the same statistics.
void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& config,
                     const Normalizer* normalizer = nullptr);

struct LoadedCheckpoint {
  TrainState state;
  TrainConfig config;
  bool has_normalizer = false;
  Normalizer normalizer;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace tsde
