#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsde/rng.hpp"
#include "tsde/tensor.hpp"

namespace tsde {

// One multivariate series instance: values [K, L] (features x time), binary
// observation mask of the same shape, optional class label, and the global
// feature index behind each row (identity unless features were subsampled).
struct Series {
  Tensor values;
  Tensor obs_mask;
  int label = -1;
  std::vector<int64_t> feature_ids;

  int64_t K() const { return values.dim(0); }
  int64_t L() const { return values.dim(1); }
};

using SeriesBatch = std::vector<Series>;

// A full-length series as loaded from disk, before windowing.
struct RawSeries {
  Tensor values;    // [K, T_total]
  Tensor obs_mask;  // [K, T_total]
  std::vector<std::string> feature_names;
};

// CSV layout: header row naming the K feature columns, one row per timestamp.
// Cells equal to missing_token (case-insensitive) are treated as missing.
RawSeries load_csv(const std::string& path, const std::string& missing_token = "NaN");
void save_csv(const std::string& path, const Tensor& values,
              const std::vector<std::string>& feature_names = {},
              const Tensor* obs_mask = nullptr, const std::string& missing_token = "NaN");

// Per-feature standardization statistics fitted on observed entries of the
// training split only.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kStdFloor = 1e-6;

  Tensor normalize(const Tensor& values, const Tensor& obs_mask) const;  // zero-fills missing
  Tensor denormalize(const Tensor& values) const;
};

Normalizer fit_normalizer(const RawSeries& train);

// Rolling windows at offsets 0, stride, 2*stride, ... Each window copies its
// [K, L] slice; evaluation splits use stride == horizon for disjoint windows.
SeriesBatch window(const RawSeries& series, int64_t L, int64_t stride);

// Synthetic 3-feature series: unit ramp, sine with the given period, seeded
// white noise. Fully observed.
Series synth_generate(int64_t L, uint64_t seed, int64_t period = 12);

// Keeps K_feat uniformly sampled distinct features per instance, recording the
// selection in feature_ids so the feature-embedding table stays addressable.
SeriesBatch subsample_features(const SeriesBatch& batch, int64_t K_feat, Rng& rng);

// Dataset manifest: JSON file naming the split CSVs and windowing parameters.
struct DatasetManifest {
  std::string train_csv;
  std::string val_csv;
  std::string test_csv;
  int64_t L = 0;
  int64_t stride = 1;
  int64_t horizon = 0;  // L2, forecasting only
  int64_t K_feat = 0;   // 0 = use all features
  std::string missing_token = "NaN";
  std::string train_labels;  // optional, one integer per window
  std::string test_labels;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

// Loads a split named in the manifest ("train" / "val" / "test"), applies the
// given normalizer (fit one on the train split first), and windows it.
struct Dataset {
  SeriesBatch instances;
  int64_t n_features = 0;
};

Dataset load_split(const DatasetManifest& manifest, const std::string& split,
                   const Normalizer& norm);
RawSeries load_raw_split(const DatasetManifest& manifest, const std::string& split);

std::vector<int> load_labels(const std::string& path);

}  // namespace tsde
