#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsde/data.hpp"
#include "tsde/diffusion.hpp"
#include "tsde/masking.hpp"
#include "tsde/model.hpp"
#include "tsde/rng.hpp"

namespace tsde {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr = 1e-3;
  double decay_point_1 = 0.75;  // lr * 0.1 after this fraction of epochs
  double decay_point_2 = 0.90;  // and again after this one
  double weight_decay = 1e-6;   // decoupled
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  MaskKind mask_kind = MaskKind::IIF;
  uint64_t seed = 1;
  int T = 50;
  double beta_min = 1e-4;
  double beta_max = 0.5;
  int64_t horizon = 0;  // forecasting mask length
  int64_t K_feat = 0;   // per-instance feature subsampling, 0 = off
  bool deterministic = true;
};

// Learning rate in effect during a (1-based) epoch: decays by 0.1 after
// ceil(decay_point * epochs) epochs have completed.
double scheduled_lr(const TrainConfig& config, int epoch);

struct AdamState {
  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::map<std::string, Moments> slots;
  int64_t step = 0;
};

// Everything needed to resume training exactly: parameters, optimizer
// moments, rng stream, epoch counter.
struct TrainState {
  ModelParams model;
  AdamState opt;
  Rng rng;
  int64_t epoch = 0;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
};

// Self-supervised pretraining with the IIF mask (or whatever mask_kind says).
TrainState pretrain(const Dataset& data, const ModelConfig& model_config,
                    const TrainConfig& config);

// Continues from an existing state with a task mask; updates all backbone
// weights. epochs = 0 returns an identical copy.
TrainState finetune(const TrainState& start, const Dataset& data, const TrainConfig& config);

// One Adam step over the visited parameters from their accumulated grads.
void adam_step(const ModelParams& params, AdamState& opt, const TrainConfig& config, double lr);
void adam_step_subset(const std::vector<std::pair<std::string, ad::Var>>& params, AdamState& opt,
                      const TrainConfig& config, double lr);

// Runs config.epochs more epochs in place (shared by pretrain/finetune).
void train_epochs(TrainState& state, const Dataset& data, const TrainConfig& config);

}  // namespace tsde
