#include "tsde/embedder.hpp"

#include <cmath>
#include <stdexcept>

#include "tsde/instrumentation.hpp"

namespace tsde {

namespace counters {
int64_t embed_calls = 0;
int64_t predict_noise_calls = 0;
int64_t encoder_layer_calls = 0;
}  // namespace counters

Tensor time_embedding(int64_t L, int64_t dim) {
  if (dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even");
  const int64_t half = dim / 2;
  const double tau = 10000.0;
  Tensor out({L, dim});
  for (int64_t l = 0; l < L; ++l) {
    const double pos = static_cast<double>(l + 1);  // timestamps index from 1
    for (int64_t j = 0; j < half; ++j) {
      const double freq = std::pow(tau, static_cast<double>(j) / static_cast<double>(half));
      out.at(l, j) = std::sin(pos / freq);
      out.at(l, half + j) = std::cos(pos / freq);
    }
  }
  return out;
}

Tensor diff_step_embedding(int64_t T, int64_t dim) {
  if (dim % 2 != 0) throw std::invalid_argument("diff_step_embedding: dim must be even");
  const int64_t half = dim / 2;
  Tensor out({T, dim});
  for (int64_t t = 0; t < T; ++t) {
    const double step = static_cast<double>(t + 1);
    for (int64_t j = 0; j < half; ++j) {
      const double freq =
          std::pow(10.0, 4.0 * static_cast<double>(j) / static_cast<double>(half - 1));
      out.at(t, j) = std::sin(freq * step);
      out.at(t, half + j) = std::cos(freq * step);
    }
  }
  return out;
}

ad::Var input_transform(const EmbedderParams& params, const ModelConfig& config,
                        const Tensor& x_obs, const std::vector<int64_t>& feature_ids,
                        const Tensor& s_time) {
  const int64_t K = x_obs.dim(0), L = x_obs.dim(1);
  if (static_cast<int64_t>(feature_ids.size()) != K)
    throw std::invalid_argument("input_transform: feature_ids size != K");
  if (s_time.dim(0) != L || s_time.dim(1) != config.time_emb_dim)
    throw std::invalid_argument("input_transform: bad s_time shape");

  ad::Var x_col = ad::constant(x_obs.reshaped({K * L, 1}));
  ad::Var proj = ad::relu(ad::add_rowvec(ad::matmul(x_col, params.in_proj.W), params.in_proj.b));

  // s_time broadcast over features: row (k, l) gets s_time[l].
  Tensor time_rows({K * L, config.time_emb_dim});
  for (int64_t k = 0; k < K; ++k)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t j = 0; j < config.time_emb_dim; ++j)
        time_rows.at(k * L + l, j) = s_time.at(l, j);

  // s_feat broadcast over timestamps via a repeated-index table lookup, so the
  // gradient lands on the selected table rows.
  std::vector<int64_t> lookup(static_cast<size_t>(K * L));
  for (int64_t k = 0; k < K; ++k) {
    const int64_t fid = feature_ids[static_cast<size_t>(k)];
    if (fid < 0 || fid >= config.n_features)
      throw std::out_of_range("input_transform: feature id out of range");
    for (int64_t l = 0; l < L; ++l) lookup[static_cast<size_t>(k * L + l)] = fid;
  }
  ad::Var feat = ad::rows(params.feat_table, std::move(lookup));

  return ad::concat_last({proj, ad::constant(std::move(time_rows)), feat});
}

ad::Var encoder_layer(const EncoderLayerParams& p, const ad::Var& x2, int64_t B, int64_t S,
                      int64_t n_heads) {
  ++counters::encoder_layer_calls;
  const int64_t d = x2->val.dim(1);
  if (x2->val.dim(0) != B * S) throw std::invalid_argument("encoder_layer: bad leading dim");
  if (d % n_heads != 0) throw std::invalid_argument("encoder_layer: heads must divide d");
  const int64_t dh = d / n_heads;

  auto heads_view = [&](const ad::Var& m) {
    // [B*S, d] -> [B*heads, S, dh]
    return ad::reshape(
        ad::permute(ad::reshape(m, {B, S, n_heads, dh}), {0, 2, 1, 3}),
        {B * n_heads, S, dh});
  };

  ad::Var q = heads_view(ad::add_rowvec(ad::matmul(x2, p.q.W), p.q.b));
  ad::Var k = heads_view(ad::add_rowvec(ad::matmul(x2, p.k.W), p.k.b));
  ad::Var v = heads_view(ad::add_rowvec(ad::matmul(x2, p.v.W), p.v.b));

  ad::Var scores = ad::scale(ad::bmm(q, ad::transpose12(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  ad::Var attn = ad::softmax_last(scores);
  ad::Var ctx = ad::bmm(attn, v);  // [B*heads, S, dh]
  ctx = ad::reshape(ad::permute(ad::reshape(ctx, {B, n_heads, S, dh}), {0, 2, 1, 3}), {B * S, d});
  ad::Var mha = ad::add_rowvec(ad::matmul(ctx, p.o.W), p.o.b);

  ad::Var y = ad::layernorm(ad::add(x2, mha), p.ln1.gamma, p.ln1.beta);
  ad::Var ff = ad::add_rowvec(
      ad::matmul(ad::gelu(ad::add_rowvec(ad::matmul(y, p.ff1.W), p.ff1.b)), p.ff2.W), p.ff2.b);
  return ad::layernorm(ad::add(y, ff), p.ln2.gamma, p.ln2.beta);
}

ad::Var encode_temporal(const EmbedderParams& params, const ModelConfig& config,
                        const ad::Var& x2, int64_t K, int64_t L) {
  // Rows are already grouped by feature: K contiguous length-L sequences.
  return encoder_layer(params.enc_time, x2, K, L, config.n_heads);
}

ad::Var encode_feature(const EmbedderParams& params, const ModelConfig& config,
                       const ad::Var& x2, int64_t K, int64_t L) {
  const int64_t d = x2->val.dim(1);
  ad::Var cols = ad::reshape(ad::permute(ad::reshape(x2, {K, L, d}), {1, 0, 2}), {L * K, d});
  ad::Var enc = encoder_layer(params.enc_feat, cols, L, K, config.n_heads);
  return ad::reshape(ad::permute(ad::reshape(enc, {L, K, d}), {1, 0, 2}), {K * L, d});
}

Embedding embed(const EmbedderParams& params, const ModelConfig& config, const Tensor& x_obs,
                const Tensor& m_cond, const std::vector<int64_t>& feature_ids) {
  ++counters::embed_calls;
  if (x_obs.rank() != 2 || !x_obs.same_shape(m_cond))
    throw std::invalid_argument("embed: x_obs/m_cond must both be [K,L]");
  const int64_t K = x_obs.dim(0), L = x_obs.dim(1);

  Tensor s_time = time_embedding(L, config.time_emb_dim);
  ad::Var xt = input_transform(params, config, x_obs, feature_ids, s_time);

  // Crossover: the shared encoders applied in both orders.
  ad::Var branch_a = encode_temporal(params, config, encode_feature(params, config, xt, K, L), K, L);
  ad::Var branch_b = encode_feature(params, config, encode_temporal(params, config, xt, K, L), K, L);

  ad::Var a16 = ad::add_rowvec(ad::matmul(branch_a, params.out_proj_a.W), params.out_proj_a.b);
  ad::Var b16 = ad::add_rowvec(ad::matmul(branch_b, params.out_proj_b.W), params.out_proj_b.b);
  ad::Var mask_col = ad::constant(m_cond.reshaped({K * L, 1}));

  Embedding e;
  e.z = ad::silu(ad::concat_last({a16, b16, mask_col}));
  e.K = K;
  e.L = L;
  return e;
}

}  // namespace tsde
