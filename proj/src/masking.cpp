#include "tsde/masking.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsde {

namespace {

void check_binary_2d(const Tensor& m, const char* who) {
  if (m.rank() != 2) throw std::invalid_argument(std::string(who) + ": mask must be [K,L]");
  for (int64_t i = 0; i < m.numel(); ++i)
    if (m[i] != 0.0 && m[i] != 1.0)
      throw std::invalid_argument(std::string(who) + ": mask entries must be 0 or 1");
}

// Zeroes round(N*ratio) of the N ones in-place, uniformly without replacement.
void knock_out_ratio(Tensor& mask, double ratio, Rng& rng) {
  std::vector<int64_t> ones;
  for (int64_t i = 0; i < mask.numel(); ++i)
    if (mask[i] == 1.0) ones.push_back(i);
  const int64_t n_remove = round_half_up(static_cast<double>(ones.size()) * ratio);
  if (n_remove <= 0) return;
  auto pick = rng.sample_without_replacement(static_cast<int64_t>(ones.size()), n_remove);
  for (int64_t p : pick) mask[ones[static_cast<size_t>(p)]] = 0.0;
}

void zero_column(Tensor& mask, int64_t col) {
  const int64_t K = mask.dim(0), L = mask.dim(1);
  for (int64_t k = 0; k < K; ++k) mask.at(k, col % L) = 0.0;
}

}  // namespace

const char* mask_kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::IIF: return "iif";
    case MaskKind::Imputation: return "imputation";
    case MaskKind::History: return "history";
    case MaskKind::Interpolation: return "interpolation";
    case MaskKind::Forecasting: return "forecasting";
  }
  return "?";
}

MaskKind mask_kind_from_name(const std::string& name) {
  if (name == "iif") return MaskKind::IIF;
  if (name == "imputation") return MaskKind::Imputation;
  if (name == "history") return MaskKind::History;
  if (name == "interpolation") return MaskKind::Interpolation;
  if (name == "forecasting") return MaskKind::Forecasting;
  throw std::invalid_argument("unknown mask kind: " + name);
}

Tensor MaskSet::target() const {
  Tensor t(m.shape());
  for (int64_t i = 0; i < m.numel(); ++i) t[i] = m[i] - m_iif[i];
  return t;
}

int64_t round_half_up(double x) {
  return static_cast<int64_t>(std::floor(x + 0.5));
}

MaskSet iif_mask(const Tensor& m, Rng& rng) {
  const double ratio = rng.uniform(0.1, 0.9);
  const double p = rng.uniform();
  return iif_mask_with(m, ratio, p, rng);
}

MaskSet iif_mask_with(const Tensor& m, double ratio, double p, Rng& rng) {
  check_binary_2d(m, "iif_mask");
  MaskSet ms{m, m, MaskKind::IIF};
  knock_out_ratio(ms.m_iif, ratio, rng);
  const int64_t L = m.dim(1);
  if (p > 1.0 / 3.0 && p < 2.0 / 3.0) {
    zero_column(ms.m_iif, rng.uniform_int(0, L - 1));
  } else if (p >= 2.0 / 3.0) {
    const int64_t max_len = std::max<int64_t>(1, round_half_up(static_cast<double>(L) / 3.0));
    const int64_t span = rng.uniform_int(1, max_len);
    for (int64_t col = L - span; col < L; ++col) zero_column(ms.m_iif, col);
  }
  return ms;
}

MaskSet imputation_mask(const Tensor& m, Rng& rng) {
  return imputation_mask_with(m, rng.uniform(0.1, 0.9), rng);
}

MaskSet imputation_mask_with(const Tensor& m, double ratio, Rng& rng) {
  check_binary_2d(m, "imputation_mask");
  MaskSet ms{m, m, MaskKind::Imputation};
  knock_out_ratio(ms.m_iif, ratio, rng);
  return ms;
}

MaskSet history_mask(const Tensor& m, const Tensor& other_m, Rng& rng) {
  return history_mask_with(m, other_m, rng.uniform(), rng);
}

MaskSet history_mask_with(const Tensor& m, const Tensor& other_m, double p, Rng& rng) {
  check_binary_2d(m, "history_mask");
  check_binary_2d(other_m, "history_mask(other)");
  if (!m.same_shape(other_m))
    throw std::invalid_argument("history_mask: shape mismatch");
  if (p > 0.5) {
    MaskSet ms = imputation_mask(m, rng);
    ms.kind = MaskKind::History;
    return ms;
  }
  MaskSet ms{m, m, MaskKind::History};
  for (int64_t i = 0; i < m.numel(); ++i) ms.m_iif[i] = m[i] * other_m[i];
  return ms;
}

MaskSet interpolation_mask(const Tensor& m, Rng& rng) {
  check_binary_2d(m, "interpolation_mask");
  MaskSet ms{m, m, MaskKind::Interpolation};
  zero_column(ms.m_iif, rng.uniform_int(0, m.dim(1) - 1));
  return ms;
}

MaskSet forecasting_mask(const Tensor& m, int64_t horizon) {
  check_binary_2d(m, "forecasting_mask");
  const int64_t L = m.dim(1);
  if (horizon < 1 || horizon > L)
    throw std::invalid_argument("forecasting_mask: horizon must be in [1, L], got " +
                                std::to_string(horizon));
  MaskSet ms{m, m, MaskKind::Forecasting};
  for (int64_t col = L - horizon; col < L; ++col) zero_column(ms.m_iif, col);
  return ms;
}

SplitSeries split(const Tensor& x, const MaskSet& ms) {
  if (!x.same_shape(ms.m))
    throw std::invalid_argument("split: series/mask shape mismatch");
  SplitSeries out{Tensor(x.shape()), Tensor(x.shape())};
  for (int64_t i = 0; i < x.numel(); ++i) {
    out.x_obs[i] = x[i] * ms.m_iif[i];
    out.x_msk[i] = x[i] * (ms.m[i] - ms.m_iif[i]);
  }
  return out;
}

}  // namespace tsde
