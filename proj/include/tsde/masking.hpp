#pragma once

#include "tsde/rng.hpp"
#include "tsde/tensor.hpp"

namespace tsde {

enum class MaskKind { IIF, Imputation, History, Interpolation, Forecasting };

const char* mask_kind_name(MaskKind k);
MaskKind mask_kind_from_name(const std::string& name);

// The pair (m, m_iif): m marks values available in the data, m_iif the
// pseudo-observed subset the model may condition on. m - m_iif is the set of
// training targets.
struct MaskSet {
  Tensor m;      // [K, L] binary
  Tensor m_iif;  // [K, L] binary, m_iif <= m elementwise
  MaskKind kind = MaskKind::IIF;

  Tensor target() const;  // m - m_iif
};

// Round-half-up, the convention used for all mask cardinalities.
int64_t round_half_up(double x);

// Pretraining mask: random removal of round(N*r) observed values, then with
// probability 1/3 each, additionally blank one random timestamp (interpolation
// flavor) or the last l' timestamps (forecasting flavor).
MaskSet iif_mask(const Tensor& m, Rng& rng);
// Deterministic core with the two random scalars pinned; rng still drives the
// choice of removed cells / columns.
MaskSet iif_mask_with(const Tensor& m, double ratio, double p, Rng& rng);

MaskSet imputation_mask(const Tensor& m, Rng& rng);
MaskSet imputation_mask_with(const Tensor& m, double ratio, Rng& rng);

// Intersection with a second sample's observation mask, or (with probability
// > 0.5) a plain imputation mask.
MaskSet history_mask(const Tensor& m, const Tensor& other_m, Rng& rng);
MaskSet history_mask_with(const Tensor& m, const Tensor& other_m, double p, Rng& rng);

// One uniformly chosen timestamp blanked.
MaskSet interpolation_mask(const Tensor& m, Rng& rng);

// The last horizon timestamps blanked.
MaskSet forecasting_mask(const Tensor& m, int64_t horizon);

// x_obs = x .* m_iif, x_msk = x .* (m - m_iif).
struct SplitSeries {
  Tensor x_obs;
  Tensor x_msk;
};
SplitSeries split(const Tensor& x, const MaskSet& ms);

}  // namespace tsde
