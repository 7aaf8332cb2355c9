#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsde/autodiff.hpp"
#include "tsde/rng.hpp"
#include "tsde/tensor.hpp"

namespace tsde {

// Architecture constants. Defaults follow the reference setup: 128-d time
// embedding, 16-d feature embedding, 16 input channels (model width 160,
// 8 heads), 16 output channels per crossover branch (embedding width 33),
// 4 residual layers of 64 channels, 128-d diffusion-step embedding.
struct ModelConfig {
  int64_t n_features = 0;  // rows of the feature-embedding table
  int64_t time_emb_dim = 128;
  int64_t feat_emb_dim = 16;
  int64_t input_channels = 16;
  int64_t n_heads = 8;
  int64_t ff_hidden = 64;
  int64_t out_channels = 16;
  int64_t res_layers = 4;
  int64_t res_channels = 64;
  int64_t diff_emb_dim = 128;

  int64_t d_model() const { return input_channels + time_emb_dim + feat_emb_dim; }
  int64_t embed_channels() const { return 2 * out_channels + 1; }

  void validate() const;

  // A deliberately small configuration for gradient checks and smoke training.
  static ModelConfig micro(int64_t n_features);
};

struct LinearParams {
  ad::Var W;  // [in, out]
  ad::Var b;  // [out]
};

struct LayerNormParams {
  ad::Var gamma;
  ad::Var beta;
};

struct EncoderLayerParams {
  LinearParams q, k, v, o;
  LinearParams ff1, ff2;
  LayerNormParams ln1, ln2;
};

struct EmbedderParams {
  LinearParams in_proj;          // 1 -> input_channels
  EncoderLayerParams enc_time;   // temporal encoder (g)
  EncoderLayerParams enc_feat;   // feature encoder (h)
  LinearParams out_proj_a;       // d_model -> out_channels, branch g(h(.))
  LinearParams out_proj_b;       // d_model -> out_channels, branch h(g(.))
  ad::Var feat_table;            // [n_features, feat_emb_dim]
};

struct ResidualLayerParams {
  LinearParams diff_proj;  // diff_emb_dim -> res_channels
  LinearParams cond_proj;  // embed_channels -> 2 * res_channels
  LinearParams mid_proj;   // res_channels -> 2 * res_channels
  LinearParams res_skip;   // res_channels -> 2 * res_channels
};

struct DenoiserParams {
  LinearParams x_proj;  // 1 -> res_channels
  std::vector<ResidualLayerParams> layers;
  LinearParams head1;  // res_channels -> res_channels
  LinearParams head2;  // res_channels -> 1, zero-initialized
};

struct ProjectionHeadParams {
  LinearParams proj;  // [K * (embed_channels - 1), K]
  int64_t K = 0;
};

struct ClassifierHeadParams {
  LinearParams l1;  // K * L * embed_channels -> 256
  LinearParams l2;  // 256 -> 256
  LinearParams l3;  // 256 -> n_classes
  double dropout = 0.1;
  int64_t input_dim = 0;
  int64_t n_classes = 0;
};

struct ModelParams {
  ModelConfig config;
  EmbedderParams embedder;
  DenoiserParams denoiser;
  std::shared_ptr<ProjectionHeadParams> projection_head;  // optional
  std::shared_ptr<ClassifierHeadParams> classifier_head;  // optional
};

// Fresh parameters; linear layers use U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// the feature table N(0,1), the final denoiser head exactly zero.
ModelParams init_model(const ModelConfig& config, Rng& rng);

ProjectionHeadParams init_projection_head(const ModelConfig& config, int64_t K, Rng& rng);
ClassifierHeadParams init_classifier_head(const ModelConfig& config, int64_t K, int64_t L,
                                          int64_t n_classes, Rng& rng);

// Visits every trainable tensor with a stable name, in a fixed order.
using ParamVisitor = std::function<void(const std::string&, const ad::Var&)>;
void visit_params(const ModelParams& params, const ParamVisitor& fn);
void visit_embedder(const EmbedderParams& p, const ParamVisitor& fn);
void visit_denoiser(const DenoiserParams& p, const ParamVisitor& fn);
void visit_projection_head(const ProjectionHeadParams& p, const ParamVisitor& fn);
void visit_classifier_head(const ClassifierHeadParams& p, const ParamVisitor& fn);

// Backbone = embedder + denoiser (what diffusion training updates).
void visit_backbone(const ModelParams& params, const ParamVisitor& fn);

// FNV-1a over the bytes of every backbone tensor; used by freezing tests.
uint64_t backbone_hash(const ModelParams& params);

// Deep copy: fresh leaf nodes, same values. Heads are cloned when present.
ModelParams clone_model(const ModelParams& params);

void zero_all_grads(const ModelParams& params);

}  // namespace tsde
