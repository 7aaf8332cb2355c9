#include "tsde/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tsde {

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T)
    throw std::invalid_argument("diffusion step out of range: t=" + std::to_string(t) +
                                ", T=" + std::to_string(T));
}

NoiseSchedule quadratic_schedule(int T, double beta_min, double beta_max) {
  if (T < 2) throw std::invalid_argument("quadratic_schedule: T must be >= 2");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw std::invalid_argument("quadratic_schedule: need 0 < beta_min < beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<size_t>(T));
  s.alpha_bar.resize(static_cast<size_t>(T));
  s.sigma2.resize(static_cast<size_t>(T));
  const double sq_min = std::sqrt(beta_min);
  const double sq_max = std::sqrt(beta_max);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    double b;
    if (t == T) {
      b = beta_max;  // (0 + 1*sqrt(beta_max))^2, rounded exactly
    } else {
      const double a1 = static_cast<double>(T - t) / static_cast<double>(T + t);
      const double a2 = static_cast<double>(t - 1) / static_cast<double>(T - 1);
      const double root = a1 * sq_min + a2 * sq_max;
      b = root * root;
    }
    s.beta[static_cast<size_t>(t - 1)] = b;
    prod *= (1.0 - b);
    s.alpha_bar[static_cast<size_t>(t - 1)] = prod;
  }
  s.sigma2[0] = s.beta[0];
  for (int t = 2; t <= T; ++t) {
    const double ab_prev = s.alpha_bar[static_cast<size_t>(t - 2)];
    const double ab = s.alpha_bar[static_cast<size_t>(t - 1)];
    s.sigma2[static_cast<size_t>(t - 1)] =
        s.beta[static_cast<size_t>(t - 1)] * (1.0 - ab_prev) / (1.0 - ab);
  }
  return s;
}

Tensor forward_sample(const Tensor& x0_msk, int t, const Tensor& eps,
                      const NoiseSchedule& sched) {
  sched.check_step(t);
  if (!x0_msk.same_shape(eps))
    throw std::invalid_argument("forward_sample: x0/eps shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  const double ca = std::sqrt(ab);
  const double cb = std::sqrt(1.0 - ab);
  Tensor out(x0_msk.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ca * x0_msk[i] + cb * eps[i];
  return out;
}

Tensor reverse_mean(const Tensor& x_t_msk, int t, const Tensor& eps_hat,
                    const NoiseSchedule& sched) {
  sched.check_step(t);
  if (!x_t_msk.same_shape(eps_hat))
    throw std::invalid_argument("reverse_mean: x_t/eps_hat shape mismatch");
  const double b = sched.beta_at(t);
  const double ab = sched.alpha_bar_at(t);
  const double inv_sq = 1.0 / std::sqrt(1.0 - b);
  const double coef = b / std::sqrt(1.0 - ab);
  Tensor out(x_t_msk.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = inv_sq * (x_t_msk[i] - coef * eps_hat[i]);
  return out;
}

double masked_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& m,
                   const Tensor& m_iif) {
  if (!eps.same_shape(eps_hat) || !eps.same_shape(m) || !eps.same_shape(m_iif))
    throw std::invalid_argument("masked_loss: shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < eps.numel(); ++i) {
    const double tgt = m[i] - m_iif[i];
    const double d = (eps[i] - eps_hat[i]) * tgt;
    acc += d * d;
  }
  return acc;
}

}  // namespace tsde
