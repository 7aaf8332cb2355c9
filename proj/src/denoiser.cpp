#include "tsde/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "tsde/instrumentation.hpp"

namespace tsde {

ad::Var predict_noise_graph(const DenoiserParams& params, const ModelConfig& config,
                            const Tensor& x_t_msk, int t, int T, const Embedding& z) {
  ++counters::predict_noise_calls;
  if (t < 1 || t > T)
    throw std::invalid_argument("predict_noise: step " + std::to_string(t) + " out of range");
  if (x_t_msk.rank() != 2)
    throw std::invalid_argument("predict_noise: x_t must be [K,L]");
  const int64_t K = x_t_msk.dim(0), L = x_t_msk.dim(1);
  if (z.K != K || z.L != L || z.channels() != config.embed_channels())
    throw std::invalid_argument("predict_noise: embedding shape mismatch");
  const int64_t C = config.res_channels;

  Tensor s_diff_all = diff_step_embedding(T, config.diff_emb_dim);
  Tensor s_diff_t({1, config.diff_emb_dim});
  for (int64_t j = 0; j < config.diff_emb_dim; ++j) s_diff_t.at(0, j) = s_diff_all.at(t - 1, j);
  ad::Var sdiff = ad::constant(std::move(s_diff_t));

  ad::Var x_col = ad::constant(x_t_msk.reshaped({K * L, 1}));
  ad::Var y = ad::relu(ad::add_rowvec(ad::matmul(x_col, params.x_proj.W), params.x_proj.b));

  ad::Var skip_sum;
  for (const auto& layer : params.layers) {
    ad::Var d = ad::reshape(
        ad::add_rowvec(ad::matmul(sdiff, layer.diff_proj.W), layer.diff_proj.b), {C});
    ad::Var u = ad::add(
        ad::add_rowvec(ad::matmul(ad::add_rowvec(y, d), layer.mid_proj.W), layer.mid_proj.b),
        ad::add_rowvec(ad::matmul(z.z, layer.cond_proj.W), layer.cond_proj.b));
    ad::Var gate = ad::mul(ad::tanh_op(ad::slice_last(u, 0, C)),
                           ad::sigmoid(ad::slice_last(u, C, 2 * C)));
    ad::Var rs = ad::add_rowvec(ad::matmul(gate, layer.res_skip.W), layer.res_skip.b);
    y = ad::scale(ad::add(y, ad::slice_last(rs, 0, C)), 1.0 / std::sqrt(2.0));
    ad::Var s = ad::slice_last(rs, C, 2 * C);
    skip_sum = skip_sum ? ad::add(skip_sum, s) : s;
  }

  ad::Var skip = ad::scale(skip_sum, 1.0 / std::sqrt(static_cast<double>(params.layers.size())));
  ad::Var h = ad::relu(ad::add_rowvec(ad::matmul(skip, params.head1.W), params.head1.b));
  return ad::add_rowvec(ad::matmul(h, params.head2.W), params.head2.b);  // [K*L, 1]
}

Tensor predict_noise(const DenoiserParams& params, const ModelConfig& config,
                     const Tensor& x_t_msk, int t, int T, const Embedding& z) {
  ad::Var out = predict_noise_graph(params, config, x_t_msk, t, T, z);
  return out->val.reshaped({x_t_msk.dim(0), x_t_msk.dim(1)});
}

}  // namespace tsde
