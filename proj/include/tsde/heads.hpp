#pragma once

#include <optional>
#include <vector>

#include "tsde/data.hpp"
#include "tsde/metrics.hpp"
#include "tsde/model.hpp"

namespace tsde {

struct HeadTrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  uint64_t seed = 42;
};

// Reconstructs a [K, L] series from an embedding, one dense map per timestamp
// over the K * (C - 1) non-mask channels.
Tensor project_reconstruct(const ProjectionHeadParams& head, const Tensor& z_tensor);

// Finetunes only the projection head (MSE on observed cells); the embedder is
// frozen and must come out bit-identical. Creates the head if absent.
void finetune_projection(ModelParams& model, const Dataset& data, const HeadTrainConfig& config);

// Per-timestamp anomaly score: feature-mean squared reconstruction error.
// Scores are concatenated over instances in order.
std::vector<double> anomaly_scores(const ModelParams& model, const SeriesBatch& instances);

struct DetectionResult {
  std::vector<double> scores;
  std::vector<int> pred;            // score > threshold
  std::vector<int> adjusted;        // after point-adjust (empty without gt)
  std::optional<PrecisionRecallF1> metrics;
};

DetectionResult detect(const ModelParams& model, const SeriesBatch& instances, double threshold,
                       const std::vector<int>* gt = nullptr);

// Trains the 3-layer classifier head on embeddings of (imputed) labeled
// instances; backbone frozen. Returns per-epoch mean cross-entropy.
std::vector<double> train_classifier(ModelParams& model, const SeriesBatch& labeled,
                                     int64_t n_classes, const HeadTrainConfig& config);

// Class probabilities (softmax); dropout disabled.
std::vector<double> classify_probs(const ModelParams& model, const Series& instance);

}  // namespace tsde
