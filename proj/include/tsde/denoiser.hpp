#pragma once

#include "tsde/autodiff.hpp"
#include "tsde/embedder.hpp"
#include "tsde/model.hpp"

namespace tsde {

// Conditional noise predictor eps_theta(x_t, t | z). Conv1x1-only gated
// residual stack: no operation mixes values across (k, l) positions, so a
// reverse step costs nothing attention-shaped.
ad::Var predict_noise_graph(const DenoiserParams& params, const ModelConfig& config,
                            const Tensor& x_t_msk, int t, int T, const Embedding& z);

// Forward-only convenience returning the [K, L] prediction tensor.
Tensor predict_noise(const DenoiserParams& params, const ModelConfig& config,
                     const Tensor& x_t_msk, int t, int T, const Embedding& z);

}  // namespace tsde
