#pragma once

#include <vector>

#include "tsde/diffusion.hpp"
#include "tsde/model.hpp"
#include "tsde/rng.hpp"

namespace tsde {

// S probabilistic completions of one series, plus elementwise sample
// summaries. Cells with target_mask = 0 are copied from the input verbatim.
struct SampleSet {
  std::vector<Tensor> samples;  // S x [K, L]
  Tensor median;                // [K, L]
  Tensor q05;
  Tensor q95;
  Tensor target_mask;  // 1 where values were generated
};

struct GenerateOptions {
  int64_t n_samples = 100;
  // The literal inference pseudo-code adds sigma_t * eps at every step; the
  // default drops the noise at t = 1.
  bool terminal_noise = false;
};

// Reverse-diffusion completion of the cells where m = 0, conditioned on the
// embedding of (x0 .* m, m). The embedding is computed once and shared by all
// samples and steps.
SampleSet generate(const ModelParams& params, const NoiseSchedule& sched, const Tensor& x0,
                   const Tensor& m, const std::vector<int64_t>& feature_ids, Rng& rng,
                   const GenerateOptions& opts = {});

// Missing cells (obs_mask = 0) are generated; observed cells condition.
SampleSet impute(const ModelParams& params, const NoiseSchedule& sched, const Series& instance,
                 Rng& rng, const GenerateOptions& opts = {});

// The last horizon columns are generated in addition to any missing history.
SampleSet forecast(const ModelParams& params, const NoiseSchedule& sched, const Series& instance,
                   int64_t horizon, Rng& rng, const GenerateOptions& opts = {});

}  // namespace tsde
