#include "tsde/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "tsde/denoiser.hpp"
#include "tsde/embedder.hpp"
#include "tsde/masking.hpp"
#include "tsde/metrics.hpp"

namespace tsde {

namespace {

void check_params_usable(const ModelParams& params) {
  bool finite = true;
  visit_backbone(params, [&](const std::string&, const ad::Var& v) {
    for (int64_t i = 0; i < v->val.numel(); ++i)
      if (!std::isfinite(v->val[i])) finite = false;
  });
  if (!finite) throw std::runtime_error("generate: model parameters contain non-finite values");
  // An exactly zero final head is the initialization signature: the reverse
  // chain would predict zero noise everywhere.
  bool all_zero = true;
  for (int64_t i = 0; i < params.denoiser.head2.W->val.numel() && all_zero; ++i)
    all_zero = params.denoiser.head2.W->val[i] == 0.0;
  for (int64_t i = 0; i < params.denoiser.head2.b->val.numel() && all_zero; ++i)
    all_zero = params.denoiser.head2.b->val[i] == 0.0;
  if (all_zero)
    throw std::runtime_error("generate: model looks untrained (final head still zero)");
}

}  // namespace

SampleSet generate(const ModelParams& params, const NoiseSchedule& sched, const Tensor& x0,
                   const Tensor& m, const std::vector<int64_t>& feature_ids, Rng& rng,
                   const GenerateOptions& opts) {
  if (opts.n_samples < 1) throw std::invalid_argument("generate: need at least one sample");
  if (x0.rank() != 2 || !x0.same_shape(m))
    throw std::invalid_argument("generate: x0 and m must both be [K,L]");
  check_params_usable(params);
  const int64_t K = x0.dim(0), L = x0.dim(1), n = K * L;
  const int T = sched.T;

  Tensor x_cond(x0.shape());
  for (int64_t i = 0; i < n; ++i) x_cond[i] = x0[i] * m[i];
  // One conditioning embedding for all samples and all reverse steps.
  Embedding z = embed(params.embedder, params.config, x_cond, m, feature_ids);

  SampleSet out;
  out.target_mask = Tensor(x0.shape());
  for (int64_t i = 0; i < n; ++i) out.target_mask[i] = 1.0 - m[i];
  out.samples.reserve(static_cast<size_t>(opts.n_samples));

  for (int64_t s = 0; s < opts.n_samples; ++s) {
    Tensor x(x0.shape());
    for (int64_t i = 0; i < n; ++i) x[i] = (1.0 - m[i]) * rng.normal();
    for (int t = T; t >= 1; --t) {
      Tensor eps_hat = predict_noise(params.denoiser, params.config, x, t, T, z);
      x = reverse_mean(x, t, eps_hat, sched);
      if (t > 1 || opts.terminal_noise) {
        const double sigma = std::sqrt(sched.sigma2_at(t));
        for (int64_t i = 0; i < n; ++i) x[i] += sigma * rng.normal();
      }
    }
    Tensor sample(x0.shape());
    for (int64_t i = 0; i < n; ++i) sample[i] = x0[i] * m[i] + x[i] * (1.0 - m[i]);
    out.samples.push_back(std::move(sample));
  }

  out.median = Tensor(x0.shape());
  out.q05 = Tensor(x0.shape());
  out.q95 = Tensor(x0.shape());
  std::vector<double> cell(static_cast<size_t>(opts.n_samples));
  for (int64_t i = 0; i < n; ++i) {
    for (size_t s = 0; s < cell.size(); ++s) cell[s] = out.samples[s][i];
    std::sort(cell.begin(), cell.end());
    out.median[i] = quantile_linear(cell, 0.5);
    out.q05[i] = quantile_linear(cell, 0.05);
    out.q95[i] = quantile_linear(cell, 0.95);
  }
  return out;
}

SampleSet impute(const ModelParams& params, const NoiseSchedule& sched, const Series& instance,
                 Rng& rng, const GenerateOptions& opts) {
  return generate(params, sched, instance.values, instance.obs_mask, instance.feature_ids, rng,
                  opts);
}

SampleSet forecast(const ModelParams& params, const NoiseSchedule& sched, const Series& instance,
                   int64_t horizon, Rng& rng, const GenerateOptions& opts) {
  const int64_t L = instance.L();
  if (horizon < 1) throw std::invalid_argument("forecast: horizon must be >= 1");
  if (horizon >= L)
    throw std::invalid_argument("forecast: horizon " + std::to_string(horizon) +
                                " must be smaller than the window length " + std::to_string(L));
  MaskSet ms = forecasting_mask(instance.obs_mask, horizon);
  return generate(params, sched, instance.values, ms.m_iif, instance.feature_ids, rng, opts);
}

}  // namespace tsde
