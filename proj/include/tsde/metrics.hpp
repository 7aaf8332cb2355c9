#pragma once

#include <vector>

#include "tsde/tensor.hpp"

namespace tsde {

// Linear interpolation between order statistics: position (n-1)*alpha in the
// ascending sorted sample. The single quantile convention used everywhere
// (sampler medians, CRPS inverse CDF).
double quantile_linear(const std::vector<double>& sorted_ascending, double alpha);

// Quantile loss L_alpha(q, x) = (1{x < q} - alpha) * (q - x).
double quantile_loss(double q, double x, double alpha);

// Discretized CRPS of one predictive sample set against one scalar truth:
// (2/N) * sum_i L_{alpha_i}(F^-1(alpha_i), x), alpha_i = i * tick,
// tick * (N + 1) = 1.
double crps_cell(std::vector<double> samples, double truth, double tick = 0.05);

// Dataset-level CRPS: sum of per-cell scores over evaluation cells divided by
// sum of |truth| over the same cells. Accumulate across instances, then read.
class CrpsAccumulator {
 public:
  explicit CrpsAccumulator(double tick = 0.05) : tick_(tick) {}

  // samples: [S, K, L]; truth, m_eval: [K, L].
  void add(const std::vector<Tensor>& samples, const Tensor& truth, const Tensor& m_eval);
  double value() const;  // throws if no eval mass
  int64_t cells() const { return cells_; }

 private:
  double tick_;
  double score_sum_ = 0;
  double abs_sum_ = 0;
  int64_t cells_ = 0;
};

// CRPS of the feature-summed distribution per forecast timestamp, normalized
// by the total |truth| over the window columns [window_start, L).
double crps_sum(const std::vector<Tensor>& samples, const Tensor& truth, int64_t window_start,
                double tick = 0.05);

// Deterministic errors over evaluation cells, accumulated across instances.
class PointErrorAccumulator {
 public:
  void add(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval);
  double mae() const;
  double mse() const;
  double rmse() const;
  int64_t cells() const { return cells_; }

 private:
  double abs_sum_ = 0;
  double sq_sum_ = 0;
  int64_t cells_ = 0;
};

double mae(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval);
double mse(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval);
double rmse(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval);

// Threshold flagging a fraction `ratio` of the validation scores: the largest
// non-flagged order statistic, so that #{score > delta} = round(ratio * n).
// ratio 0 exceeds the max, ratio 1 lands below the min.
double anomaly_threshold(const std::vector<double>& scores_val, double ratio);

// Point-adjust convention: any hit inside a maximal ground-truth anomaly run
// flags the whole run.
std::vector<int> adjust_predictions(const std::vector<int>& pred, const std::vector<int>& gt);

struct PrecisionRecallF1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};
PrecisionRecallF1 precision_recall_f1(const std::vector<int>& pred, const std::vector<int>& gt);

// Trapezoidal area under the ROC curve; ties handled by grouping.
double auroc(const std::vector<double>& scores, const std::vector<int>& gt);

}  // namespace tsde
