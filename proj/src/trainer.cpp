#include "tsde/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "tsde/denoiser.hpp"
#include "tsde/embedder.hpp"

namespace tsde {

double scheduled_lr(const TrainConfig& config, int epoch) {
  const auto boundary = [&](double frac) {
    return static_cast<int>(std::ceil(frac * static_cast<double>(config.epochs)));
  };
  double lr = config.lr;
  if (epoch > boundary(config.decay_point_1)) lr *= 0.1;
  if (epoch > boundary(config.decay_point_2)) lr *= 0.1;
  return lr;
}

namespace {

MaskSet draw_mask(MaskKind kind, const Series& inst, const Dataset& data,
                  const TrainConfig& config, Rng& rng) {
  switch (kind) {
    case MaskKind::IIF:
      return iif_mask(inst.obs_mask, rng);
    case MaskKind::Imputation:
      return imputation_mask(inst.obs_mask, rng);
    case MaskKind::History: {
      if (data.instances.empty())
        throw std::invalid_argument("history mask needs a paired-sample pool");
      const int64_t j = rng.uniform_int(0, static_cast<int64_t>(data.instances.size()) - 1);
      const Series& partner = data.instances[static_cast<size_t>(j)];
      // Partner rows are matched through this instance's global feature ids.
      Tensor other(inst.obs_mask.shape());
      const int64_t K = inst.K(), L = inst.L();
      for (int64_t k = 0; k < K; ++k) {
        const int64_t fid = inst.feature_ids[static_cast<size_t>(k)];
        if (fid >= partner.K())
          throw std::invalid_argument("history mask: partner sample lacks feature row");
        for (int64_t l = 0; l < L; ++l) other.at(k, l) = partner.obs_mask.at(fid, l);
      }
      return history_mask(inst.obs_mask, other, rng);
    }
    case MaskKind::Interpolation:
      return interpolation_mask(inst.obs_mask, rng);
    case MaskKind::Forecasting:
      if (config.horizon < 1)
        throw std::invalid_argument("forecasting mask needs a positive horizon (L2)");
      return forecasting_mask(inst.obs_mask, config.horizon);
  }
  throw std::logic_error("unreachable mask kind");
}

void check_dataset(const Dataset& data, const ModelConfig& mc) {
  if (data.instances.empty()) throw std::invalid_argument("training dataset is empty");
  for (const Series& s : data.instances)
    for (int64_t fid : s.feature_ids)
      if (fid < 0 || fid >= mc.n_features)
        throw std::invalid_argument("dataset feature id exceeds model feature table");
}

}  // namespace

void adam_step_subset(const std::vector<std::pair<std::string, ad::Var>>& params, AdamState& opt,
                      const TrainConfig& config, double lr) {
  ++opt.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  for (const auto& [name, var] : params) {
    if (!var->has_grad()) continue;  // parameter unused this step
    auto& slot = opt.slots[name];
    if (slot.m.empty()) {
      slot.m = Tensor::zeros(var->val.shape());
      slot.v = Tensor::zeros(var->val.shape());
    }
    const int64_t n = var->val.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double g = var->grad[i];
      slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
      slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      var->val[i] -=
          lr * (mhat / (std::sqrt(vhat) + config.adam_eps) + config.weight_decay * var->val[i]);
    }
  }
}

void adam_step(const ModelParams& params, AdamState& opt, const TrainConfig& config, double lr) {
  std::vector<std::pair<std::string, ad::Var>> flat;
  visit_backbone(params, [&](const std::string& n, const ad::Var& v) { flat.emplace_back(n, v); });
  adam_step_subset(flat, opt, config, lr);
}

void train_epochs(TrainState& state, const Dataset& data, const TrainConfig& config) {
  check_dataset(data, state.model.config);
  const NoiseSchedule sched = quadratic_schedule(config.T, config.beta_min, config.beta_max);
  const ModelConfig& mc = state.model.config;
  Rng& rng = state.rng;

  std::vector<size_t> order(data.instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  // config.epochs is the phase total; a resumed state continues at epoch+1 so
  // the decay boundaries land where they would in an uninterrupted run.
  for (int e = static_cast<int>(state.epoch) + 1; e <= config.epochs; ++e) {
    const double lr = scheduled_lr(config, e);
    rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t n_batches = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      zero_all_grads(state.model);
      ad::Var total;
      for (size_t bi = start; bi < stop; ++bi) {
        const Series* inst = &data.instances[order[bi]];
        Series sub;
        if (config.K_feat > 0 && config.K_feat < inst->K()) {
          SeriesBatch one{*inst};
          sub = subsample_features(one, config.K_feat, rng)[0];
          inst = &sub;
        }
        const int t = static_cast<int>(rng.uniform_int(1, config.T));
        MaskSet ms = draw_mask(config.mask_kind, *inst, data, config, rng);
        SplitSeries sp = split(inst->values, ms);
        Tensor eps(inst->values.shape());
        for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
        Tensor x_t = forward_sample(sp.x_msk, t, eps, sched);

        Embedding z = embed(state.model.embedder, mc, sp.x_obs, ms.m_iif, inst->feature_ids);
        ad::Var eps_hat = predict_noise_graph(state.model.denoiser, mc, x_t, t, config.T, z);
        const int64_t n = inst->values.numel();
        ad::Var residual = ad::sub(ad::constant(eps.reshaped({n, 1})), eps_hat);
        ad::Var masked = ad::cmul(residual, ms.target().reshaped({n, 1}));
        ad::Var loss_i = ad::sum_all(ad::mul(masked, masked));
        total = total ? ad::add(total, loss_i) : loss_i;
      }
      total = ad::scale(total, 1.0 / static_cast<double>(stop - start));
      const double batch_loss = total->val[0];
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("training aborted: non-finite loss at epoch " +
                                 std::to_string(e) + ", batch " + std::to_string(n_batches) +
                                 " (lr=" + std::to_string(lr) + ")");
      ad::backward(total);
      adam_step(state.model, state.opt, config, lr);
      loss_sum += batch_loss;
      ++n_batches;
    }
    state.epoch_losses.push_back(loss_sum / static_cast<double>(n_batches));
    state.epoch = e;
  }
}

TrainState pretrain(const Dataset& data, const ModelConfig& model_config,
                    const TrainConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("pretrain: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("pretrain: batch_size must be >= 1");
  if (!(config.lr > 0)) throw std::invalid_argument("pretrain: lr must be positive");
  TrainState state{ModelParams{}, AdamState{}, Rng(config.seed), 0, {}};
  state.model = init_model(model_config, state.rng);
  train_epochs(state, data, config);
  return state;
}

TrainState finetune(const TrainState& start, const Dataset& data, const TrainConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("finetune: epochs must be >= 0");
  TrainState state{clone_model(start.model), start.opt, start.rng, start.epoch,
                   start.epoch_losses};
  if (config.epochs == 0) return state;
  // Task-specific finetuning restarts the schedule and moments.
  state.opt = AdamState{};
  state.rng = Rng(config.seed);
  state.epoch = 0;
  state.epoch_losses.clear();
  train_epochs(state, data, config);
  return state;
}

}  // namespace tsde
