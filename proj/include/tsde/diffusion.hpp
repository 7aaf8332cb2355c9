#pragma once

#include <vector>

#include "tsde/tensor.hpp"

namespace tsde {

// Quadratic noise schedule. Steps are 1-based (t = 1..T) to match the usual
// diffusion indexing; accessors take 1-based steps.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta[t-1]
  std::vector<double> alpha_bar;  // prod_{i<=t} (1 - beta_i)
  std::vector<double> sigma2;     // posterior variances, sigma2[0] = beta_1

  double beta_at(int t) const { return beta.at(static_cast<size_t>(t - 1)); }
  double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<size_t>(t - 1)); }
  double sigma2_at(int t) const { return sigma2.at(static_cast<size_t>(t - 1)); }
  void check_step(int t) const;
};

// beta_t = ((T-t)/(T+t) * sqrt(beta_min) + (t-1)/(T-1) * sqrt(beta_max))^2.
// The endpoint t = T is pinned to beta_max, the correctly rounded value of the
// collapsed formula.
NoiseSchedule quadratic_schedule(int T, double beta_min = 1e-4, double beta_max = 0.5);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
Tensor forward_sample(const Tensor& x0_msk, int t, const Tensor& eps, const NoiseSchedule& sched);

// (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(1 - beta_t)
Tensor reverse_mean(const Tensor& x_t_msk, int t, const Tensor& eps_hat,
                    const NoiseSchedule& sched);

// || (eps - eps_hat) .* (m - m_iif) ||_2^2
double masked_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& m,
                   const Tensor& m_iif);

}  // namespace tsde
