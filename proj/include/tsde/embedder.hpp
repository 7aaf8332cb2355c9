#pragma once

#include <vector>

#include "tsde/autodiff.hpp"
#include "tsde/model.hpp"
#include "tsde/tensor.hpp"

namespace tsde {

// Fixed sinusoidal timestamp table, rows l = 1..L:
//   s_time(l) = (sin(l / tau^(j/half))_j, cos(l / tau^(j/half))_j), tau = 1e4.
Tensor time_embedding(int64_t L, int64_t dim = 128);

// Fixed sinusoidal diffusion-step table, rows t = 1..T, frequencies growing as
// 10^(4j/(half-1)):
//   s_diff(t) = (sin(10^(4j/(half-1)) t)_j, cos(10^(4j/(half-1)) t)_j).
Tensor diff_step_embedding(int64_t T, int64_t dim = 128);

// The [K, L, 2*out_channels + 1] conditioning embedding as a flat graph node
// of shape [K*L, C]; row (k, l) is k*L + l.
struct Embedding {
  ad::Var z;  // [K*L, C]
  int64_t K = 0;
  int64_t L = 0;
  int64_t channels() const { return z->val.dim(1); }
  Tensor as_tensor() const { return z->val.reshaped({K, L, z->val.dim(1)}); }
};

// Nonlinear input transform: Concat(ReLU(Conv1x1(x_obs)), s_time, s_feat),
// giving a [K*L, d_model] tensor (channels: input, time, feature).
ad::Var input_transform(const EmbedderParams& params, const ModelConfig& config,
                        const Tensor& x_obs, const std::vector<int64_t>& feature_ids,
                        const Tensor& s_time);

// One shared post-norm encoder layer applied to each of the B length-S
// sequences of x2 (shape [B*S, d], sequences contiguous).
ad::Var encoder_layer(const EncoderLayerParams& p, const ad::Var& x2, int64_t B, int64_t S,
                      int64_t n_heads);

// Temporal: each of the K rows is a length-L sequence. Feature: each of the L
// columns is a length-K sequence. Both expect/return [K*L, d] in (k, l) order.
ad::Var encode_temporal(const EmbedderParams& params, const ModelConfig& config,
                        const ad::Var& x2, int64_t K, int64_t L);
ad::Var encode_feature(const EmbedderParams& params, const ModelConfig& config,
                       const ad::Var& x2, int64_t K, int64_t L);

// Full embedding function:
//   SiLU(Concat(Conv(g(h(x~))), Conv(h(g(x~))), m_cond)).
// m_cond is m_iif during training and the observation mask m at inference.
Embedding embed(const EmbedderParams& params, const ModelConfig& config, const Tensor& x_obs,
                const Tensor& m_cond, const std::vector<int64_t>& feature_ids);

}  // namespace tsde
