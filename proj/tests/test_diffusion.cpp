#include <cmath>
#include <doctest.h>

#include "tsde/diffusion.hpp"
#include "tsde/rng.hpp"

using namespace tsde;

TEST_CASE("quadratic schedule endpoints and shape") {
  NoiseSchedule s = quadratic_schedule(50);
  CHECK(s.T == 50);
  // Formula collapses at t = T: the first term is zero, the second squares
  // back to beta_max.
  CHECK(s.beta_at(50) == 0.5);
  // Direct evaluation of the printed formula at t = 1: ((49/51) * 0.01)^2.
  const double beta1 = std::pow((49.0 / 51.0) * 0.01, 2);
  CHECK(std::abs(s.beta_at(1) - beta1) / beta1 < 1e-6);
  CHECK(s.beta_at(1) == doctest::Approx(9.231064975009614e-05).epsilon(1e-9));

  for (int t = 1; t <= 50; ++t) {
    CHECK(s.beta_at(t) > 0.0);
    CHECK(s.beta_at(t) < 1.0);
  }
  for (int t = 2; t <= 50; ++t) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
  CHECK(s.alpha_bar_at(50) < 0.01);  // near-Gaussian terminal state

  CHECK(s.sigma2_at(1) == s.beta_at(1));
  for (int t = 2; t <= 50; ++t) {
    const double expected =
        s.beta_at(t) * (1.0 - s.alpha_bar_at(t - 1)) / (1.0 - s.alpha_bar_at(t));
    CHECK(s.sigma2_at(t) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(s.sigma2_at(t) > 0.0);
    CHECK(s.sigma2_at(t) < 1.0);
  }
}

TEST_CASE("schedule parameter validation") {
  CHECK_THROWS_AS(quadratic_schedule(1), std::invalid_argument);
  CHECK_THROWS_AS(quadratic_schedule(50, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(quadratic_schedule(50, 0.5, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(quadratic_schedule(50, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("forward sample formula") {
  NoiseSchedule s = quadratic_schedule(50);
  Tensor x0 = Tensor::full({2, 3}, 2.0);
  SUBCASE("zero noise leaves sqrt(alpha_bar) * x0") {
    Tensor eps = Tensor::zeros({2, 3});
    Tensor xt = forward_sample(x0, 10, eps, s);
    const double expect = std::sqrt(s.alpha_bar_at(10)) * 2.0;
    for (int64_t i = 0; i < xt.numel(); ++i) CHECK(xt[i] == doctest::Approx(expect));
  }
  SUBCASE("synthetic alpha_bar = 0.25") {
    NoiseSchedule synth;
    synth.T = 1;
    synth.beta = {0.5};
    synth.alpha_bar = {0.25};
    synth.sigma2 = {0.5};
    Tensor one = Tensor::full({1, 1}, 1.0);
    Tensor xt = forward_sample(one, 1, one, synth);
    CHECK(xt[0] == doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-12));
  }
  SUBCASE("terminal step is noise-dominated") {
    Tensor eps = Tensor::full({2, 3}, 1.0);
    Tensor xt = forward_sample(x0, 50, eps, s);
    const double signal_bound = std::sqrt(s.alpha_bar_at(50)) * 2.0;
    for (int64_t i = 0; i < xt.numel(); ++i) CHECK(std::abs(xt[i] - eps[i]) <= signal_bound + 1e-9);
  }
  SUBCASE("step bounds enforced") {
    Tensor eps = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(forward_sample(x0, 0, eps, s), std::invalid_argument);
    CHECK_THROWS_AS(forward_sample(x0, 51, eps, s), std::invalid_argument);
  }
}

TEST_CASE("reverse mean formula") {
  SUBCASE("zero predicted noise reduces to rescaling") {
    NoiseSchedule s = quadratic_schedule(50);
    Tensor xt = Tensor::full({2, 2}, 3.0);
    Tensor eps_hat = Tensor::zeros({2, 2});
    Tensor mu = reverse_mean(xt, 7, eps_hat, s);
    const double expect = 3.0 / std::sqrt(1.0 - s.beta_at(7));
    for (int64_t i = 0; i < mu.numel(); ++i) CHECK(mu[i] == doctest::Approx(expect));
  }
  SUBCASE("hand-evaluated case beta=0.5, alpha_bar=0.25") {
    NoiseSchedule synth;
    synth.T = 1;
    synth.beta = {0.5};
    synth.alpha_bar = {0.25};
    synth.sigma2 = {0.5};
    Tensor one = Tensor::full({1, 1}, 1.0);
    Tensor mu = reverse_mean(one, 1, one, synth);
    CHECK(mu[0] == doctest::Approx((1.0 - 0.5 / std::sqrt(0.75)) / std::sqrt(0.5)).epsilon(1e-12));
  }
  SUBCASE("one-step algebraic identity: reverse of forward recovers x0 at T=1") {
    // With T=1, alpha_bar_1 = 1 - beta_1, so
    // reverse_mean(sqrt(1-b) x0 + sqrt(b) e, 1, e) == x0 exactly.
    NoiseSchedule s;
    s.T = 1;
    const double b = 0.3;
    s.beta = {b};
    s.alpha_bar = {1.0 - b};
    s.sigma2 = {b};
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x0({3, 4});
      Tensor eps({3, 4});
      for (int64_t i = 0; i < x0.numel(); ++i) {
        x0[i] = rng.normal();
        eps[i] = rng.normal();
      }
      Tensor xt = forward_sample(x0, 1, eps, s);
      Tensor back = reverse_mean(xt, 1, eps, s);
      for (int64_t i = 0; i < x0.numel(); ++i)
        CHECK(back[i] == doctest::Approx(x0[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked loss") {
  Tensor eps({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor m = Tensor::full({2, 3}, 1.0);
  SUBCASE("perfect prediction scores zero") {
    CHECK(masked_loss(eps, eps, m, Tensor::zeros({2, 3})) == 0.0);
  }
  SUBCASE("empty target set scores zero regardless of prediction") {
    Tensor eps_hat = Tensor::full({2, 3}, 99.0);
    CHECK(masked_loss(eps, eps_hat, m, m) == 0.0);
  }
  SUBCASE("unit residuals count target cells") {
    Tensor eps_hat({2, 3}, {0, 1, 2, 4, 5, 6});  // off by one at three cells
    Tensor m_iif({2, 3}, {0, 0, 0, 1, 1, 1});    // first row is the target
    CHECK(masked_loss(eps, eps_hat, m, m_iif) == doctest::Approx(3.0));
  }
  SUBCASE("indifferent to values outside the target support") {
    Tensor m_iif({2, 3}, {0, 1, 1, 1, 1, 1});
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    b[3] = 123.0;  // outside target
    CHECK(masked_loss(eps, a, m, m_iif) == masked_loss(eps, b, m, m_iif));
  }
}

TEST_CASE("forward sample variance matches 1 - alpha_bar") {
  NoiseSchedule s = quadratic_schedule(50);
  Rng rng(2024);
  const int t = 25;
  const int64_t n = 100000;
  Tensor x0 = Tensor::zeros({1, 1});
  double sum = 0, sumsq = 0;
  for (int64_t i = 0; i < n; ++i) {
    Tensor eps({1, 1}, {rng.normal()});
    const double v = forward_sample(x0, t, eps, s)[0];
    sum += v;
    sumsq += v * v;
  }
  const double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(std::abs(var - (1.0 - s.alpha_bar_at(t))) / (1.0 - s.alpha_bar_at(t)) < 0.05);
}
