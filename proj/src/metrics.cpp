#include "tsde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsde {

double quantile_linear(const std::vector<double>& sorted, double alpha) {
  if (sorted.empty()) throw std::invalid_argument("quantile_linear: empty sample");
  if (alpha <= 0.0) return sorted.front();
  if (alpha >= 1.0) return sorted.back();
  const double pos = alpha * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double quantile_loss(double q, double x, double alpha) {
  return ((x < q ? 1.0 : 0.0) - alpha) * (q - x);
}

double crps_cell(std::vector<double> samples, double truth, double tick) {
  if (samples.empty()) throw std::invalid_argument("crps_cell: empty sample set");
  if (!(tick > 0.0 && tick < 1.0)) throw std::invalid_argument("crps_cell: bad tick");
  const auto n_levels = static_cast<int64_t>(std::llround(1.0 / tick)) - 1;  // tick*(N+1)=1
  if (n_levels < 1) throw std::invalid_argument("crps_cell: tick too coarse");
  std::sort(samples.begin(), samples.end());
  double acc = 0;
  for (int64_t i = 1; i <= n_levels; ++i) {
    const double alpha = static_cast<double>(i) * tick;
    acc += quantile_loss(quantile_linear(samples, alpha), truth, alpha);
  }
  return 2.0 / static_cast<double>(n_levels) * acc;
}

void CrpsAccumulator::add(const std::vector<Tensor>& samples, const Tensor& truth,
                          const Tensor& m_eval) {
  if (samples.empty()) throw std::invalid_argument("CrpsAccumulator: no samples");
  if (!truth.same_shape(m_eval)) throw std::invalid_argument("CrpsAccumulator: shape mismatch");
  const int64_t n = truth.numel();
  std::vector<double> cell(samples.size());
  for (int64_t i = 0; i < n; ++i) {
    if (m_eval[i] != 1.0) continue;
    for (size_t s = 0; s < samples.size(); ++s) cell[s] = samples[s][i];
    score_sum_ += crps_cell(cell, truth[i], tick_);
    abs_sum_ += std::abs(truth[i]);
    ++cells_;
  }
}

double CrpsAccumulator::value() const {
  if (cells_ == 0) throw std::runtime_error("CRPS: no evaluation cells");
  if (abs_sum_ == 0.0)
    throw std::runtime_error("CRPS: normalizer sum |x| over evaluation cells is zero");
  return score_sum_ / abs_sum_;
}

double crps_sum(const std::vector<Tensor>& samples, const Tensor& truth, int64_t window_start,
                double tick) {
  if (samples.empty()) throw std::invalid_argument("crps_sum: no samples");
  if (truth.rank() != 2) throw std::invalid_argument("crps_sum: truth must be [K,L]");
  const int64_t K = truth.dim(0), L = truth.dim(1);
  if (window_start < 0 || window_start >= L)
    throw std::invalid_argument("crps_sum: bad window start");
  double score = 0, denom = 0;
  std::vector<double> summed(samples.size());
  for (int64_t l = window_start; l < L; ++l) {
    double truth_sum = 0;
    for (int64_t k = 0; k < K; ++k) {
      truth_sum += truth.at(k, l);
      denom += std::abs(truth.at(k, l));
    }
    for (size_t s = 0; s < samples.size(); ++s) {
      double v = 0;
      for (int64_t k = 0; k < K; ++k) v += samples[s].at(k, l);
      summed[s] = v;
    }
    score += crps_cell(summed, truth_sum, tick);
  }
  if (denom == 0.0) throw std::runtime_error("crps_sum: zero normalizer over window");
  return score / denom;
}

void PointErrorAccumulator::add(const Tensor& prediction, const Tensor& truth,
                                const Tensor& m_eval) {
  if (!prediction.same_shape(truth) || !truth.same_shape(m_eval))
    throw std::invalid_argument("PointErrorAccumulator: shape mismatch");
  for (int64_t i = 0; i < truth.numel(); ++i) {
    if (m_eval[i] != 1.0) continue;
    const double d = prediction[i] - truth[i];
    abs_sum_ += std::abs(d);
    sq_sum_ += d * d;
    ++cells_;
  }
}

double PointErrorAccumulator::mae() const {
  if (cells_ == 0) throw std::runtime_error("MAE: no evaluation cells");
  return abs_sum_ / static_cast<double>(cells_);
}

double PointErrorAccumulator::mse() const {
  if (cells_ == 0) throw std::runtime_error("MSE: no evaluation cells");
  return sq_sum_ / static_cast<double>(cells_);
}

double PointErrorAccumulator::rmse() const { return std::sqrt(mse()); }

double mae(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval) {
  PointErrorAccumulator acc;
  acc.add(prediction, truth, m_eval);
  return acc.mae();
}

double mse(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval) {
  PointErrorAccumulator acc;
  acc.add(prediction, truth, m_eval);
  return acc.mse();
}

double rmse(const Tensor& prediction, const Tensor& truth, const Tensor& m_eval) {
  PointErrorAccumulator acc;
  acc.add(prediction, truth, m_eval);
  return acc.rmse();
}

double anomaly_threshold(const std::vector<double>& scores_val, double ratio) {
  if (scores_val.empty()) throw std::invalid_argument("anomaly_threshold: no scores");
  if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("anomaly_threshold: bad ratio");
  std::vector<double> s = scores_val;
  std::sort(s.begin(), s.end());
  const auto n = static_cast<int64_t>(s.size());
  int64_t flagged = static_cast<int64_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
  flagged = std::clamp<int64_t>(flagged, 0, n);
  if (flagged == 0) return std::nextafter(s.back(), std::numeric_limits<double>::infinity());
  if (flagged == n) return std::nextafter(s.front(), -std::numeric_limits<double>::infinity());
  return s[static_cast<size_t>(n - flagged - 1)];
}

std::vector<int> adjust_predictions(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("adjust_predictions: length mismatch");
  std::vector<int> out = pred;
  const size_t n = gt.size();
  size_t i = 0;
  while (i < n) {
    if (gt[i] != 1) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && gt[j] == 1) ++j;  // maximal run [i, j)
    bool hit = false;
    for (size_t k = i; k < j && !hit; ++k) hit = (pred[k] == 1);
    if (hit)
      for (size_t k = i; k < j; ++k) out[k] = 1;
    i = j;
  }
  return out;
}

PrecisionRecallF1 precision_recall_f1(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("precision_recall_f1: length mismatch");
  int64_t tp = 0, fp = 0, fn = 0, pos = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    pos += gt[i] == 1;
    if (pred[i] == 1 && gt[i] == 1) ++tp;
    if (pred[i] == 1 && gt[i] == 0) ++fp;
    if (pred[i] == 0 && gt[i] == 1) ++fn;
  }
  if (pos == 0) throw std::runtime_error("precision_recall_f1: ground truth has no positives");
  PrecisionRecallF1 r;
  r.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& gt) {
  if (scores.size() != gt.size()) throw std::invalid_argument("auroc: length mismatch");
  int64_t pos = 0, neg = 0;
  for (int g : gt) (g == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw std::runtime_error("auroc: needs at least one positive and one negative");
  std::vector<size_t> idx(scores.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double area = 0;
  double tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  size_t i = 0;
  while (i < idx.size()) {
    const double threshold = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == threshold) {
      if (gt[idx[i]] == 1)
        tp += 1;
      else
        fp += 1;
      ++i;
    }
    // Trapezoid between the previous and current operating point.
    area += (fp - prev_fp) / static_cast<double>(neg) * (tp + prev_tp) /
            (2.0 * static_cast<double>(pos));
    prev_tp = tp;
    prev_fp = fp;
  }
  return area;
}

}  // namespace tsde
