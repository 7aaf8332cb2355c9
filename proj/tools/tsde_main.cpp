// Command-line surface for the tsde library: synthetic data generation,
// diffusion pretraining/finetuning, probabilistic imputation / interpolation /
// forecasting, embedding export, anomaly detection, classification, and
// metric evaluation. Every command writes a run manifest for replay.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsde/checkpoint.hpp"
#include "tsde/data.hpp"
#include "tsde/diffusion.hpp"
#include "tsde/embedder.hpp"
#include "tsde/heads.hpp"
#include "tsde/masking.hpp"
#include "tsde/metrics.hpp"
#include "tsde/model.hpp"
#include "tsde/sampler.hpp"
#include "tsde/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        uint64_t seed, const json& config) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["config"] = config;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  m["config_hash"] = buf;
  fs::create_directories(out_dir);
  std::ofstream os(fs::path(out_dir) / "run_manifest.json");
  os << m.dump(2) << "\n";
}

void write_metrics(const std::string& path, const std::vector<std::tuple<std::string, double, int64_t>>& rows) {
  std::ofstream os(path);
  os.precision(17);
  for (const auto& [name, value, cells] : rows)
    os << name << " = " << value << " (eval_cells " << cells << ")\n";
}

struct ModelFlags {
  bool micro = false;
  tsde::ModelConfig cfg;

  void attach(CLI::App* cmd) {
    cmd->add_flag("--micro-model", micro, "use the small desk-scale architecture");
    cmd->add_option("--time-dim", cfg.time_emb_dim, "time embedding width");
    cmd->add_option("--feat-dim", cfg.feat_emb_dim, "feature embedding width");
    cmd->add_option("--input-ch", cfg.input_channels, "input projection channels");
    cmd->add_option("--heads", cfg.n_heads, "attention heads");
    cmd->add_option("--ff-hidden", cfg.ff_hidden, "encoder feed-forward width");
    cmd->add_option("--out-ch", cfg.out_channels, "output channels per crossover branch");
    cmd->add_option("--res-layers", cfg.res_layers, "denoiser residual layers");
    cmd->add_option("--res-ch", cfg.res_channels, "denoiser residual channels");
    cmd->add_option("--diff-dim", cfg.diff_emb_dim, "diffusion-step embedding width");
  }

  tsde::ModelConfig resolve(int64_t n_features) const {
    tsde::ModelConfig out = micro ? tsde::ModelConfig::micro(n_features) : cfg;
    out.n_features = n_features;
    if (!micro) {
      // explicit flags already live in cfg
    }
    return out;
  }

  json to_json(const tsde::ModelConfig& c) const {
    return {{"n_features", c.n_features},     {"time_emb_dim", c.time_emb_dim},
            {"feat_emb_dim", c.feat_emb_dim}, {"input_channels", c.input_channels},
            {"n_heads", c.n_heads},           {"ff_hidden", c.ff_hidden},
            {"out_channels", c.out_channels}, {"res_layers", c.res_layers},
            {"res_channels", c.res_channels}, {"diff_emb_dim", c.diff_emb_dim}};
  }
};

struct TrainFlags {
  tsde::TrainConfig cfg;
  std::string mask = "iif";

  void attach(CLI::App* cmd, bool finetune) {
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--batch", cfg.batch_size, "batch size");
    cmd->add_option("--lr", cfg.lr, "initial learning rate");
    cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
    cmd->add_option("--seed", cfg.seed, "rng seed");
    cmd->add_option("--steps", cfg.T, "diffusion steps T");
    cmd->add_option("--beta-min", cfg.beta_min, "schedule beta_1");
    cmd->add_option("--beta-max", cfg.beta_max, "schedule beta_T");
    cmd->add_option("--kfeat", cfg.K_feat, "feature subsampling count (0 = all)");
    cmd->add_option("--horizon", cfg.horizon, "forecast horizon L2 (forecasting mask)");
    cmd->add_flag("--deterministic", cfg.deterministic, "single-threaded reductions");
    if (finetune)
      cmd->add_option("--mask", mask, "task mask: imputation|history|interpolation|forecasting");
  }

  json to_json() const {
    return {{"epochs", cfg.epochs},     {"batch", cfg.batch_size},
            {"lr", cfg.lr},             {"weight_decay", cfg.weight_decay},
            {"seed", cfg.seed},         {"T", cfg.T},
            {"beta_min", cfg.beta_min}, {"beta_max", cfg.beta_max},
            {"K_feat", cfg.K_feat},     {"horizon", cfg.horizon},
            {"mask", mask},             {"deterministic", cfg.deterministic}};
  }
};

void write_loss_log(const std::string& path, const std::vector<double>& losses) {
  std::ofstream os(path);
  os.precision(17);
  os << "epoch,mean_loss\n";
  for (size_t i = 0; i < losses.size(); ++i) os << (i + 1) << "," << losses[i] << "\n";
}

void write_samples_csv(const std::string& path, const std::vector<tsde::Tensor>& samples) {
  std::ofstream os(path);
  os.precision(17);
  os << "sample,k,l,value\n";
  for (size_t s = 0; s < samples.size(); ++s) {
    const auto& t = samples[s];
    for (int64_t k = 0; k < t.dim(0); ++k)
      for (int64_t l = 0; l < t.dim(1); ++l)
        os << s << "," << k << "," << l << "," << t.at(k, l) << "\n";
  }
}

std::vector<tsde::Tensor> read_samples_csv(const std::string& path, int64_t K, int64_t L) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open samples file " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<tsde::Tensor> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    int64_t s, k, l;
    double v;
    if (std::sscanf(line.c_str(), "%ld,%ld,%ld,%lf", &s, &k, &l, &v) != 4)
      throw std::runtime_error("bad samples row: " + line);
    while (static_cast<int64_t>(out.size()) <= s) out.emplace_back(tsde::Tensor({K, L}));
    out[static_cast<size_t>(s)].at(k, l) = v;
  }
  if (out.empty()) throw std::runtime_error("samples file has no rows");
  return out;
}

tsde::Tensor denormalize_masked(const tsde::Normalizer& norm, const tsde::Tensor& values) {
  return norm.denormalize(values);
}

// Shared flow for impute / interpolate / forecast.
int run_generation(const std::string& command, const std::string& ckpt_path,
                   const std::string& input_csv, const std::string& truth_csv,
                   const std::string& out_dir, int64_t n_samples, uint64_t seed, int64_t horizon,
                   bool save_samples, bool terminal_noise, double tick) {
  auto loaded = tsde::load_checkpoint(ckpt_path);
  if (!loaded.has_normalizer)
    throw std::runtime_error("checkpoint carries no normalizer; retrain with this build");
  tsde::RawSeries raw = tsde::load_csv(input_csv);
  const int64_t K = raw.values.dim(0), L = raw.values.dim(1);
  if (K != loaded.state.model.config.n_features)
    throw std::runtime_error("input has " + std::to_string(K) + " features, model expects " +
                             std::to_string(loaded.state.model.config.n_features));

  tsde::Series inst;
  inst.values = loaded.normalizer.normalize(raw.values, raw.obs_mask);
  inst.obs_mask = raw.obs_mask;
  inst.feature_ids.resize(static_cast<size_t>(K));
  for (int64_t k = 0; k < K; ++k) inst.feature_ids[static_cast<size_t>(k)] = k;

  const auto sched = tsde::quadratic_schedule(loaded.config.T, loaded.config.beta_min,
                                              loaded.config.beta_max);
  tsde::Rng rng(seed);
  tsde::GenerateOptions opts;
  opts.n_samples = n_samples;
  opts.terminal_noise = terminal_noise;
  tsde::SampleSet set = command == "forecast"
                            ? tsde::forecast(loaded.state.model, sched, inst, horizon, rng, opts)
                            : tsde::impute(loaded.state.model, sched, inst, rng, opts);

  fs::create_directories(out_dir);
  const auto& norm = loaded.normalizer;
  std::vector<tsde::Tensor> denorm_samples;
  denorm_samples.reserve(set.samples.size());
  for (const auto& s : set.samples) denorm_samples.push_back(denormalize_masked(norm, s));
  tsde::save_csv((fs::path(out_dir) / "median.csv").string(), denormalize_masked(norm, set.median),
                 raw.feature_names);
  tsde::save_csv((fs::path(out_dir) / "q05.csv").string(), denormalize_masked(norm, set.q05),
                 raw.feature_names);
  tsde::save_csv((fs::path(out_dir) / "q95.csv").string(), denormalize_masked(norm, set.q95),
                 raw.feature_names);
  tsde::save_csv((fs::path(out_dir) / "target_mask.csv").string(), set.target_mask,
                 raw.feature_names);
  if (save_samples) write_samples_csv((fs::path(out_dir) / "samples.csv").string(), denorm_samples);

  if (!truth_csv.empty()) {
    tsde::RawSeries truth = tsde::load_csv(truth_csv);
    if (truth.values.dim(0) != K || truth.values.dim(1) != L)
      throw std::runtime_error("truth shape does not match input");
    tsde::Tensor m_eval({K, L});
    for (int64_t i = 0; i < m_eval.numel(); ++i)
      m_eval[i] = truth.obs_mask[i] * (1.0 - inst.obs_mask[i]);
    if (command == "forecast") {
      // Restrict scoring to the horizon window.
      for (int64_t k = 0; k < K; ++k)
        for (int64_t l = 0; l < L - horizon; ++l) m_eval.at(k, l) = 0.0;
    }
    tsde::Tensor median_dn = denormalize_masked(norm, set.median);
    tsde::PointErrorAccumulator pt;
    pt.add(median_dn, truth.values, m_eval);
    tsde::CrpsAccumulator crps(tick);
    crps.add(denorm_samples, truth.values, m_eval);
    std::vector<std::tuple<std::string, double, int64_t>> rows = {
        {"crps", crps.value(), crps.cells()},
        {"mae", pt.mae(), pt.cells()},
        {"mse", pt.mse(), pt.cells()},
        {"rmse", pt.rmse(), pt.cells()},
    };
    if (command == "forecast")
      rows.emplace_back("crps_sum",
                        tsde::crps_sum(denorm_samples, truth.values, L - horizon, tick),
                        horizon * K);
    write_metrics((fs::path(out_dir) / "metrics.txt").string(), rows);
  }

  json cfg = {{"checkpoint", ckpt_path}, {"input", input_csv},   {"truth", truth_csv},
              {"samples", n_samples},    {"horizon", horizon},   {"terminal_noise", terminal_noise},
              {"tick", tick},            {"save_samples", save_samples}};
  write_run_manifest(out_dir, command, seed, cfg);
  std::cout << command << ": wrote " << out_dir << " (" << n_samples << " samples)\n";
  return 0;
}

tsde::Dataset windows_from_csv(const std::string& csv, const tsde::Normalizer& norm, int64_t L,
                               int64_t stride) {
  tsde::RawSeries raw = tsde::load_csv(csv);
  tsde::RawSeries normalized;
  normalized.values = norm.normalize(raw.values, raw.obs_mask);
  normalized.obs_mask = raw.obs_mask;
  tsde::Dataset d;
  d.instances = tsde::window(normalized, L, stride);
  d.n_features = raw.values.dim(0);
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tsde: self-supervised diffusion embeddings for multivariate time series"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic trend/seasonal/noise dataset");
  std::string synth_out;
  int64_t synth_length = 480, synth_window = 48, synth_stride = 1, synth_period = 12,
          synth_horizon = 0;
  uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--length", synth_length, "total timestamps");
  synth->add_option("--window", synth_window, "window length L in the manifest");
  synth->add_option("--stride", synth_stride, "training window stride");
  synth->add_option("--period", synth_period, "seasonal period");
  synth->add_option("--horizon", synth_horizon, "forecast horizon L2 in the manifest");
  synth->add_option("--seed", synth_seed, "rng seed");

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining with the IIF mask");
  std::string pre_manifest, pre_out;
  ModelFlags pre_model;
  TrainFlags pre_train;
  pre->add_option("--manifest", pre_manifest, "dataset manifest json")->required();
  pre->add_option("--out", pre_out, "output directory (checkpoint + loss log)")->required();
  pre_model.attach(pre);
  pre_train.attach(pre, false);

  // ---- finetune ----
  auto* fine = app.add_subcommand("finetune", "task-specific finetuning from a checkpoint");
  std::string fine_manifest, fine_ckpt, fine_out;
  TrainFlags fine_train;
  fine_train.cfg.epochs = 50;
  fine->add_option("--checkpoint", fine_ckpt, "input checkpoint")->required();
  fine->add_option("--manifest", fine_manifest, "dataset manifest json")->required();
  fine->add_option("--out", fine_out, "output directory")->required();
  fine_train.attach(fine, true);
  fine_train.mask = "imputation";

  // ---- impute / interpolate / forecast ----
  struct GenCmd {
    CLI::App* cmd;
    std::string ckpt, input, truth, out;
    int64_t samples = 100;
    uint64_t seed = 1;
    int64_t horizon = 0;
    bool save_samples = false;
    bool terminal_noise = false;
    double tick = 0.05;
  };
  auto add_gen = [&](const char* name, const char* help) {
    GenCmd g;
    g.cmd = app.add_subcommand(name, help);
    return g;
  };
  GenCmd imp = add_gen("impute", "probabilistic imputation of missing values");
  GenCmd itp = add_gen("interpolate", "probabilistic interpolation (masked timestamps)");
  GenCmd fct = add_gen("forecast", "probabilistic forecasting of the last L2 timestamps");
  for (GenCmd* g : {&imp, &itp, &fct}) {
    g->cmd->add_option("--checkpoint", g->ckpt)->required();
    g->cmd->add_option("--input", g->input, "input csv (NaN marks cells to fill)")->required();
    g->cmd->add_option("--out", g->out, "output directory")->required();
    g->cmd->add_option("--truth", g->truth, "ground-truth csv for self-reported metrics");
    g->cmd->add_option("--samples", g->samples, "generated samples S");
    g->cmd->add_option("--seed", g->seed);
    g->cmd->add_option("--tick", g->tick, "CRPS quantile tick");
    g->cmd->add_flag("--save-samples", g->save_samples, "write samples.csv");
    g->cmd->add_flag("--terminal-noise", g->terminal_noise,
                     "add sigma_t noise at t=1 too (literal inference loop)");
  }
  fct.cmd->add_option("--horizon", fct.horizon, "forecast horizon L2")->required();

  // ---- embed ----
  auto* emb = app.add_subcommand("embed", "export embeddings of a series to csv");
  std::string emb_ckpt, emb_input, emb_out;
  emb->add_option("--checkpoint", emb_ckpt)->required();
  emb->add_option("--input", emb_input)->required();
  emb->add_option("--out", emb_out, "output directory")->required();

  // ---- anomaly ----
  auto* ano = app.add_subcommand("anomaly", "reconstruction-error anomaly detection");
  std::string ano_ckpt, ano_manifest, ano_gt, ano_out;
  double ano_ratio = 0.01;
  int ano_epochs = 50;
  uint64_t ano_seed = 42;  // anomaly runs default to seed 42
  ano->add_option("--checkpoint", ano_ckpt)->required();
  ano->add_option("--manifest", ano_manifest)->required();
  ano->add_option("--gt", ano_gt, "per-timestamp 0/1 labels for the test split");
  ano->add_option("--ratio", ano_ratio, "validation anomaly ratio r");
  ano->add_option("--epochs", ano_epochs, "projection-head finetuning epochs");
  ano->add_option("--seed", ano_seed);
  ano->add_option("--out", ano_out)->required();

  // ---- classify ----
  auto* cls = app.add_subcommand("classify", "train the classifier head on imputed series");
  std::string cls_ckpt, cls_manifest, cls_out;
  int64_t cls_classes = 2, cls_samples = 100;
  int cls_epochs = 40;
  uint64_t cls_seed = 1;
  cls->add_option("--checkpoint", cls_ckpt)->required();
  cls->add_option("--manifest", cls_manifest, "manifest with train/test labels")->required();
  cls->add_option("--classes", cls_classes);
  cls->add_option("--epochs", cls_epochs);
  cls->add_option("--samples", cls_samples, "imputation samples per instance");
  cls->add_option("--seed", cls_seed);
  cls->add_option("--out", cls_out)->required();

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "score predictions against ground truth");
  std::string ev_truth, ev_pred, ev_mask, ev_samples, ev_out;
  double ev_tick = 0.05;
  int64_t ev_horizon = 0;
  ev->add_option("--truth", ev_truth, "ground-truth csv (NaN = never observed)")->required();
  ev->add_option("--pred", ev_pred, "prediction csv (median)")->required();
  ev->add_option("--mask-obs", ev_mask, "csv of what the model saw (0/1)")->required();
  ev->add_option("--samples-file", ev_samples, "samples.csv for CRPS");
  ev->add_option("--tick", ev_tick);
  ev->add_option("--horizon", ev_horizon, "add CRPS-sum over the last L2 columns");
  ev->add_option("--out", ev_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      tsde::Series s = tsde::synth_generate(synth_length, synth_seed, synth_period);
      fs::create_directories(synth_out);
      const int64_t T = synth_length;
      const int64_t t_train = std::max<int64_t>(synth_window, (T * 7) / 10);
      const int64_t t_val = std::max<int64_t>(synth_window, T / 10);
      auto slice = [&](int64_t from, int64_t to) {
        tsde::Tensor v({3, to - from});
        for (int64_t k = 0; k < 3; ++k)
          for (int64_t l = from; l < to; ++l) v.at(k, l - from) = s.values.at(k, l);
        return v;
      };
      const std::vector<std::string> names = {"trend", "seasonal", "noise"};
      tsde::save_csv((fs::path(synth_out) / "train.csv").string(), slice(0, t_train), names);
      tsde::save_csv((fs::path(synth_out) / "val.csv").string(),
                     slice(std::max<int64_t>(0, t_train - 0), std::min(T, t_train + t_val)), names);
      tsde::save_csv((fs::path(synth_out) / "test.csv").string(),
                     slice(std::min(T - synth_window, t_train + t_val), T), names);
      tsde::DatasetManifest m;
      m.train_csv = "train.csv";
      m.val_csv = "val.csv";
      m.test_csv = "test.csv";
      m.L = synth_window;
      m.stride = synth_stride;
      m.horizon = synth_horizon;
      tsde::save_manifest((fs::path(synth_out) / "manifest.json").string(), m);
      write_run_manifest(synth_out, "synth", synth_seed,
                         {{"length", synth_length},
                          {"window", synth_window},
                          {"stride", synth_stride},
                          {"period", synth_period},
                          {"horizon", synth_horizon}});
      std::cout << "synth: wrote " << synth_out << "\n";
      return 0;
    }

    if (*pre) {
      auto manifest = tsde::load_manifest(pre_manifest);
      tsde::RawSeries raw_train = tsde::load_raw_split(manifest, "train");
      tsde::Normalizer norm = tsde::fit_normalizer(raw_train);
      tsde::Dataset train = tsde::load_split(manifest, "train", norm);
      tsde::ModelConfig mc = pre_model.resolve(train.n_features);
      pre_train.cfg.mask_kind = tsde::MaskKind::IIF;
      if (pre_train.cfg.horizon == 0) pre_train.cfg.horizon = manifest.horizon;
      if (pre_train.cfg.K_feat == 0) pre_train.cfg.K_feat = manifest.K_feat;
      tsde::TrainState state = tsde::pretrain(train, mc, pre_train.cfg);
      fs::create_directories(pre_out);
      tsde::save_checkpoint((fs::path(pre_out) / "model.ckpt").string(), state, pre_train.cfg,
                            &norm);
      write_loss_log((fs::path(pre_out) / "loss_log.csv").string(), state.epoch_losses);
      json cfg = pre_train.to_json();
      cfg["manifest"] = pre_manifest;
      cfg["model"] = pre_model.to_json(mc);
      write_run_manifest(pre_out, "pretrain", pre_train.cfg.seed, cfg);
      std::cout << "pretrain: " << state.epoch_losses.size() << " epochs, final loss "
                << state.epoch_losses.back() << "\n";
      return 0;
    }

    if (*fine) {
      auto loaded = tsde::load_checkpoint(fine_ckpt);
      auto manifest = tsde::load_manifest(fine_manifest);
      tsde::RawSeries raw_train = tsde::load_raw_split(manifest, "train");
      tsde::Normalizer norm =
          loaded.has_normalizer ? loaded.normalizer : tsde::fit_normalizer(raw_train);
      tsde::Dataset train = tsde::load_split(manifest, "train", norm);
      fine_train.cfg.mask_kind = tsde::mask_kind_from_name(fine_train.mask);
      if (fine_train.cfg.mask_kind == tsde::MaskKind::IIF)
        throw std::runtime_error("finetune expects a task mask, not iif");
      if (fine_train.cfg.horizon == 0) fine_train.cfg.horizon = manifest.horizon;
      if (fine_train.cfg.K_feat == 0) fine_train.cfg.K_feat = manifest.K_feat;
      tsde::TrainState state = tsde::finetune(loaded.state, train, fine_train.cfg);
      fs::create_directories(fine_out);
      tsde::save_checkpoint((fs::path(fine_out) / "model.ckpt").string(), state, fine_train.cfg,
                            loaded.has_normalizer ? &loaded.normalizer : &norm);
      write_loss_log((fs::path(fine_out) / "loss_log.csv").string(), state.epoch_losses);
      json cfg = fine_train.to_json();
      cfg["manifest"] = fine_manifest;
      cfg["checkpoint"] = fine_ckpt;
      write_run_manifest(fine_out, "finetune", fine_train.cfg.seed, cfg);
      std::cout << "finetune: done (" << fine_train.mask << " mask)\n";
      return 0;
    }

    for (GenCmd* g : {&imp, &itp, &fct})
      if (*g->cmd)
        return run_generation(g->cmd->get_name(), g->ckpt, g->input, g->truth, g->out, g->samples,
                              g->seed, g->horizon, g->save_samples, g->terminal_noise, g->tick);

    if (*emb) {
      auto loaded = tsde::load_checkpoint(emb_ckpt);
      if (!loaded.has_normalizer) throw std::runtime_error("checkpoint carries no normalizer");
      tsde::RawSeries raw = tsde::load_csv(emb_input);
      const int64_t K = raw.values.dim(0), L = raw.values.dim(1);
      tsde::Series inst;
      inst.values = loaded.normalizer.normalize(raw.values, raw.obs_mask);
      inst.obs_mask = raw.obs_mask;
      inst.feature_ids.resize(static_cast<size_t>(K));
      for (int64_t k = 0; k < K; ++k) inst.feature_ids[static_cast<size_t>(k)] = k;
      tsde::Tensor x_cond(inst.values.shape());
      for (int64_t i = 0; i < x_cond.numel(); ++i)
        x_cond[i] = inst.values[i] * inst.obs_mask[i];
      tsde::Embedding z = tsde::embed(loaded.state.model.embedder, loaded.state.model.config,
                                      x_cond, inst.obs_mask, inst.feature_ids);
      fs::create_directories(emb_out);
      std::ofstream os(fs::path(emb_out) / "embedding.csv");
      os.precision(17);
      const int64_t C = z.channels();
      os << "k,l";
      for (int64_t c = 0; c < C; ++c) os << ",z" << c;
      os << "\n";
      for (int64_t k = 0; k < K; ++k)
        for (int64_t l = 0; l < L; ++l) {
          os << k << "," << l;
          for (int64_t c = 0; c < C; ++c) os << "," << z.z->val.at(k * L + l, c);
          os << "\n";
        }
      write_run_manifest(emb_out, "embed", 0, {{"checkpoint", emb_ckpt}, {"input", emb_input}});
      std::cout << "embed: wrote " << (fs::path(emb_out) / "embedding.csv").string() << "\n";
      return 0;
    }

    if (*ano) {
      auto loaded = tsde::load_checkpoint(ano_ckpt);
      auto manifest = tsde::load_manifest(ano_manifest);
      if (!loaded.has_normalizer) throw std::runtime_error("checkpoint carries no normalizer");
      // Anomaly windows are non-overlapping.
      tsde::Dataset train = windows_from_csv(manifest.train_csv, loaded.normalizer, manifest.L,
                                             manifest.L);
      tsde::Dataset val =
          windows_from_csv(manifest.val_csv, loaded.normalizer, manifest.L, manifest.L);
      tsde::Dataset test =
          windows_from_csv(manifest.test_csv, loaded.normalizer, manifest.L, manifest.L);
      tsde::HeadTrainConfig head_cfg;
      head_cfg.epochs = ano_epochs;
      head_cfg.seed = ano_seed;
      tsde::finetune_projection(loaded.state.model, train, head_cfg);
      auto val_scores = tsde::anomaly_scores(loaded.state.model, val.instances);
      const double delta = tsde::anomaly_threshold(val_scores, ano_ratio);

      std::vector<int> gt;
      if (!ano_gt.empty()) {
        gt = tsde::load_labels(ano_gt);
        gt.resize(test.instances.size() * static_cast<size_t>(manifest.L));
      }
      auto result = tsde::detect(loaded.state.model, test.instances, delta,
                                 gt.empty() ? nullptr : &gt);
      fs::create_directories(ano_out);
      {
        std::ofstream os(fs::path(ano_out) / "scores.csv");
        os.precision(17);
        os << "t,score,pred" << (gt.empty() ? "" : ",adjusted,gt") << "\n";
        for (size_t i = 0; i < result.scores.size(); ++i) {
          os << i << "," << result.scores[i] << "," << result.pred[i];
          if (!gt.empty()) os << "," << result.adjusted[i] << "," << gt[i];
          os << "\n";
        }
      }
      std::vector<std::tuple<std::string, double, int64_t>> rows = {
          {"threshold", delta, static_cast<int64_t>(val_scores.size())}};
      if (result.metrics) {
        rows.emplace_back("precision", result.metrics->precision,
                          static_cast<int64_t>(gt.size()));
        rows.emplace_back("recall", result.metrics->recall, static_cast<int64_t>(gt.size()));
        rows.emplace_back("f1", result.metrics->f1, static_cast<int64_t>(gt.size()));
      }
      write_metrics((fs::path(ano_out) / "metrics.txt").string(), rows);
      tsde::save_checkpoint((fs::path(ano_out) / "model.ckpt").string(), loaded.state,
                            loaded.config, &loaded.normalizer);
      write_run_manifest(ano_out, "anomaly", ano_seed,
                         {{"checkpoint", ano_ckpt},
                          {"manifest", ano_manifest},
                          {"ratio", ano_ratio},
                          {"epochs", ano_epochs},
                          {"gt", ano_gt}});
      std::cout << "anomaly: threshold " << delta;
      if (result.metrics) std::cout << ", F1 " << result.metrics->f1;
      std::cout << "\n";
      return 0;
    }

    if (*cls) {
      auto loaded = tsde::load_checkpoint(cls_ckpt);
      auto manifest = tsde::load_manifest(cls_manifest);
      if (!loaded.has_normalizer) throw std::runtime_error("checkpoint carries no normalizer");
      tsde::Dataset train = tsde::load_split(manifest, "train", loaded.normalizer);
      tsde::Dataset test = tsde::load_split(manifest, "test", loaded.normalizer);
      const auto sched = tsde::quadratic_schedule(loaded.config.T, loaded.config.beta_min,
                                                  loaded.config.beta_max);
      tsde::Rng rng(cls_seed);
      // Median-impute incomplete instances, then embed with a full mask.
      auto imputed = [&](const tsde::SeriesBatch& batch) {
        tsde::SeriesBatch out;
        for (const auto& inst : batch) {
          bool complete = true;
          for (int64_t i = 0; i < inst.obs_mask.numel(); ++i)
            if (inst.obs_mask[i] == 0.0) complete = false;
          tsde::Series filled = inst;
          if (!complete) {
            tsde::GenerateOptions opts;
            opts.n_samples = cls_samples;
            auto set = tsde::impute(loaded.state.model, sched, inst, rng, opts);
            filled.values = set.median;
            filled.obs_mask = tsde::Tensor::full(inst.obs_mask.shape(), 1.0);
          }
          out.push_back(std::move(filled));
        }
        return out;
      };
      tsde::SeriesBatch train_i = imputed(train.instances);
      tsde::SeriesBatch test_i = imputed(test.instances);
      tsde::HeadTrainConfig head_cfg;
      head_cfg.epochs = cls_epochs;
      head_cfg.seed = cls_seed;
      auto losses = tsde::train_classifier(loaded.state.model, train_i, cls_classes, head_cfg);

      int64_t correct = 0;
      std::vector<double> pos_scores;
      std::vector<int> gt;
      for (const auto& inst : test_i) {
        auto probs = tsde::classify_probs(loaded.state.model, inst);
        int64_t argmax = 0;
        for (size_t c = 1; c < probs.size(); ++c)
          if (probs[c] > probs[static_cast<size_t>(argmax)]) argmax = static_cast<int64_t>(c);
        if (argmax == inst.label) ++correct;
        if (cls_classes == 2) {
          pos_scores.push_back(probs[1]);
          gt.push_back(inst.label);
        }
      }
      fs::create_directories(cls_out);
      std::vector<std::tuple<std::string, double, int64_t>> rows = {
          {"train_ce_final", losses.back(), static_cast<int64_t>(train_i.size())},
          {"test_accuracy",
           static_cast<double>(correct) / static_cast<double>(std::max<size_t>(1, test_i.size())),
           static_cast<int64_t>(test_i.size())}};
      if (cls_classes == 2) {
        bool both = false;
        if (!gt.empty()) {
          const bool has_pos = std::count(gt.begin(), gt.end(), 1) > 0;
          const bool has_neg = std::count(gt.begin(), gt.end(), 0) > 0;
          both = has_pos && has_neg;
        }
        if (both)
          rows.emplace_back("test_auroc", tsde::auroc(pos_scores, gt),
                            static_cast<int64_t>(gt.size()));
      }
      write_metrics((fs::path(cls_out) / "metrics.txt").string(), rows);
      tsde::save_checkpoint((fs::path(cls_out) / "model.ckpt").string(), loaded.state,
                            loaded.config, &loaded.normalizer);
      write_run_manifest(cls_out, "classify", cls_seed,
                         {{"checkpoint", cls_ckpt},
                          {"manifest", cls_manifest},
                          {"classes", cls_classes},
                          {"epochs", cls_epochs},
                          {"samples", cls_samples}});
      std::cout << "classify: done\n";
      return 0;
    }

    if (*ev) {
      tsde::RawSeries truth = tsde::load_csv(ev_truth);
      tsde::RawSeries pred = tsde::load_csv(ev_pred);
      tsde::RawSeries maskf = tsde::load_csv(ev_mask);
      const int64_t K = truth.values.dim(0), L = truth.values.dim(1);
      if (pred.values.dim(0) != K || pred.values.dim(1) != L)
        throw std::runtime_error("evaluate: prediction shape mismatch");
      if (maskf.values.dim(0) != K || maskf.values.dim(1) != L)
        throw std::runtime_error("evaluate: mask shape mismatch");
      tsde::Tensor m_eval({K, L});
      for (int64_t i = 0; i < m_eval.numel(); ++i)
        m_eval[i] = truth.obs_mask[i] * (1.0 - maskf.values[i]);
      tsde::PointErrorAccumulator pt;
      pt.add(pred.values, truth.values, m_eval);
      std::vector<std::tuple<std::string, double, int64_t>> rows;
      if (!ev_samples.empty()) {
        auto samples = read_samples_csv(ev_samples, K, L);
        tsde::CrpsAccumulator crps(ev_tick);
        crps.add(samples, truth.values, m_eval);
        rows.emplace_back("crps", crps.value(), crps.cells());
        if (ev_horizon > 0)
          rows.emplace_back("crps_sum",
                            tsde::crps_sum(samples, truth.values, L - ev_horizon, ev_tick),
                            ev_horizon * K);
      }
      rows.emplace_back("mae", pt.mae(), pt.cells());
      rows.emplace_back("mse", pt.mse(), pt.cells());
      rows.emplace_back("rmse", pt.rmse(), pt.cells());
      fs::create_directories(ev_out);
      write_metrics((fs::path(ev_out) / "metrics.txt").string(), rows);
      write_run_manifest(ev_out, "evaluate", 0,
                         {{"truth", ev_truth},
                          {"pred", ev_pred},
                          {"mask_obs", ev_mask},
                          {"samples_file", ev_samples},
                          {"tick", ev_tick},
                          {"horizon", ev_horizon}});
      for (const auto& [name, value, cells] : rows)
        std::cout << name << " = " << value << " (eval_cells " << cells << ")\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
