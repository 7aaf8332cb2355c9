#include <doctest.h>

#include "tsde/masking.hpp"

using namespace tsde;

namespace {

int64_t count_ones(const Tensor& t) {
  int64_t n = 0;
  for (int64_t i = 0; i < t.numel(); ++i) n += t[i] == 1.0;
  return n;
}

bool is_binary(const Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (t[i] != 0.0 && t[i] != 1.0) return false;
  return true;
}

bool leq_elementwise(const Tensor& a, const Tensor& b) {
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] > b[i]) return false;
  return true;
}

Tensor random_mask(int64_t K, int64_t L, double keep, Rng& rng) {
  Tensor m({K, L});
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform() < keep ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_CASE("iif mask: forced ratio removes an exact count") {
  Rng rng(1);
  Tensor m = Tensor::full({4, 10}, 1.0);
  // p below 1/3: imputation part only, round(40 * 0.5) = 20 zeros introduced.
  MaskSet ms = iif_mask_with(m, 0.5, 0.1, rng);
  CHECK(count_ones(ms.m_iif) == 20);
  CHECK(is_binary(ms.m_iif));
  CHECK(leq_elementwise(ms.m_iif, ms.m));
}

TEST_CASE("iif mask: interpolation branch blanks one full column") {
  Rng rng(2);
  Tensor m = Tensor::full({4, 10}, 1.0);
  MaskSet ms = iif_mask_with(m, 0.0, 0.5, rng);  // ratio 0: only the column vanishes
  int64_t blanked_cols = 0;
  for (int64_t l = 0; l < 10; ++l) {
    bool all_zero = true;
    for (int64_t k = 0; k < 4; ++k) all_zero = all_zero && ms.m_iif.at(k, l) == 0.0;
    blanked_cols += all_zero;
  }
  CHECK(blanked_cols == 1);
}

TEST_CASE("iif mask: forecasting branch blanks a suffix") {
  Rng rng(3);
  Tensor m = Tensor::full({3, 9}, 1.0);
  MaskSet ms = iif_mask_with(m, 0.0, 0.9, rng);  // p >= 2/3
  // Suffix length within {1..round(9/3)} = {1..3}; find it and check shape.
  int64_t l = 9;
  while (l > 0) {
    bool all_zero = true;
    for (int64_t k = 0; k < 3; ++k) all_zero = all_zero && ms.m_iif.at(k, l - 1) == 0.0;
    if (!all_zero) break;
    --l;
  }
  const int64_t suffix = 9 - l;
  CHECK(suffix >= 1);
  CHECK(suffix <= 3);
  // Everything before the suffix is untouched (ratio 0).
  for (int64_t k = 0; k < 3; ++k)
    for (int64_t col = 0; col < l; ++col) CHECK(ms.m_iif.at(k, col) == 1.0);
}

TEST_CASE("iif mask: all-zero input stays all zero") {
  Rng rng(4);
  Tensor m = Tensor::zeros({3, 5});
  MaskSet ms = iif_mask(m, rng);
  CHECK(count_ones(ms.m_iif) == 0);
}

TEST_CASE("imputation mask: exact removal counts") {
  Rng rng(5);
  SUBCASE("r=0.1 over 100 observed") {
    Tensor m = Tensor::full({10, 10}, 1.0);
    MaskSet ms = imputation_mask_with(m, 0.1, rng);
    CHECK(count_ones(ms.m_iif) == 90);
    CHECK(ms.kind == MaskKind::Imputation);
  }
  SUBCASE("r=0.9 over 10 observed removes round(9.0)=9") {
    Tensor m = Tensor::full({2, 5}, 1.0);
    MaskSet ms = imputation_mask_with(m, 0.9, rng);
    CHECK(count_ones(ms.m_iif) == 1);
  }
  SUBCASE("all-missing input unchanged") {
    Tensor m = Tensor::zeros({2, 5});
    MaskSet ms = imputation_mask(m, rng);
    CHECK(count_ones(ms.m_iif) == 0);
  }
}

TEST_CASE("history mask branches") {
  Rng rng(6);
  Tensor m = random_mask(4, 6, 0.7, rng);
  SUBCASE("intersection with itself is idempotent") {
    MaskSet ms = history_mask_with(m, m, 0.2, rng);
    for (int64_t i = 0; i < m.numel(); ++i) CHECK(ms.m_iif[i] == m[i]);
  }
  SUBCASE("intersection with empty partner is empty") {
    MaskSet ms = history_mask_with(m, Tensor::zeros({4, 6}), 0.2, rng);
    CHECK(count_ones(ms.m_iif) == 0);
  }
  SUBCASE("p > 0.5 falls back to an imputation draw") {
    Rng rng_a(42), rng_b(42);
    MaskSet via_history = history_mask_with(m, Tensor::zeros({4, 6}), 0.9, rng_a);
    MaskSet via_imputation = imputation_mask(m, rng_b);
    for (int64_t i = 0; i < m.numel(); ++i)
      CHECK(via_history.m_iif[i] == via_imputation.m_iif[i]);
  }
}

TEST_CASE("interpolation mask zeroes exactly one column") {
  Rng rng(7);
  SUBCASE("3x5 all ones") {
    Tensor m = Tensor::full({3, 5}, 1.0);
    MaskSet ms = interpolation_mask(m, rng);
    CHECK(count_ones(ms.m_iif) == 12);
  }
  SUBCASE("all zeros unchanged") {
    Tensor m = Tensor::zeros({3, 5});
    MaskSet ms = interpolation_mask(m, rng);
    CHECK(count_ones(ms.m_iif) == 0);
  }
  SUBCASE("L=1 blanks the only column") {
    Tensor m = Tensor::full({3, 1}, 1.0);
    MaskSet ms = interpolation_mask(m, rng);
    CHECK(count_ones(ms.m_iif) == 0);
  }
}

TEST_CASE("forecasting mask") {
  Tensor m = Tensor::full({2, 192}, 1.0);
  SUBCASE("last 24 of 192 blanked") {
    MaskSet ms = forecasting_mask(m, 24);
    for (int64_t k = 0; k < 2; ++k) {
      for (int64_t l = 0; l < 168; ++l) CHECK(ms.m_iif.at(k, l) == 1.0);
      for (int64_t l = 168; l < 192; ++l) CHECK(ms.m_iif.at(k, l) == 0.0);
    }
  }
  SUBCASE("horizon equal to L blanks everything") {
    MaskSet ms = forecasting_mask(m, 192);
    CHECK(count_ones(ms.m_iif) == 0);
  }
  SUBCASE("horizon 0 rejected") { CHECK_THROWS_AS(forecasting_mask(m, 0), std::invalid_argument); }
  SUBCASE("horizon past L rejected") {
    CHECK_THROWS_AS(forecasting_mask(m, 193), std::invalid_argument);
  }
}

TEST_CASE("split recombination identity") {
  Rng rng(8);
  SUBCASE("trivial cases") {
    Tensor x = Tensor::full({2, 3}, 1.0);
    MaskSet all{Tensor::full({2, 3}, 1.0), Tensor::full({2, 3}, 1.0), MaskKind::IIF};
    SplitSeries sp = split(x, all);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(sp.x_msk[i] == 0.0);

    MaskSet none{Tensor::full({2, 3}, 1.0), Tensor::zeros({2, 3}), MaskKind::IIF};
    sp = split(x, none);
    for (int64_t i = 0; i < x.numel(); ++i) {
      CHECK(sp.x_obs[i] == 0.0);
      CHECK(sp.x_msk[i] == x[i]);
    }
  }
  SUBCASE("x_obs + x_msk == x .* m on random draws") {
    for (int trial = 0; trial < 50; ++trial) {
      Tensor x({4, 7});
      for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
      Tensor m = random_mask(4, 7, 0.8, rng);
      MaskSet ms = iif_mask(m, rng);
      SplitSeries sp = split(x, ms);
      for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(sp.x_obs[i] + sp.x_msk[i] == doctest::Approx(x[i] * m[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mask invariants over seeded trials") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int64_t K = 1 + rng.uniform_int(0, 5);
    const int64_t L = 2 + rng.uniform_int(0, 12);
    Tensor m = random_mask(K, L, 0.75, rng);
    MaskSet candidates[] = {
        iif_mask(m, rng),
        imputation_mask(m, rng),
        interpolation_mask(m, rng),
        history_mask(m, random_mask(K, L, 0.5, rng), rng),
        forecasting_mask(m, 1 + rng.uniform_int(0, L - 1)),
    };
    for (const MaskSet& ms : candidates) {
      CHECK(is_binary(ms.m_iif));
      CHECK(leq_elementwise(ms.m_iif, m));
      // Never pseudo-observe a missing value: m_iif .* (1 - m) == 0.
      for (int64_t i = 0; i < m.numel(); ++i) CHECK(ms.m_iif[i] * (1.0 - m[i]) == 0.0);
      // Disjoint supports of the observed and target parts.
      Tensor tgt = ms.target();
      CHECK(is_binary(tgt));
      for (int64_t i = 0; i < m.numel(); ++i) CHECK(ms.m_iif[i] * tgt[i] == 0.0);
    }
  }
}

TEST_CASE("generators are deterministic in the seed") {
  Tensor m = Tensor::full({5, 8}, 1.0);
  Rng a(123), b(123);
  MaskSet ma = iif_mask(m, a);
  MaskSet mb = iif_mask(m, b);
  for (int64_t i = 0; i < m.numel(); ++i) CHECK(ma.m_iif[i] == mb.m_iif[i]);
}
