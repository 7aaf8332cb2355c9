#include "tsde/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace tsde {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'D', 'E', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_u64(os, static_cast<uint64_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor(std::istream& is) {
  const uint32_t name_len = read_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const uint32_t rank = read_u32(is);
  std::vector<int64_t> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(is));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor data for " + name);
  return {std::move(name), std::move(t)};
}

nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"n_features", c.n_features},     {"time_emb_dim", c.time_emb_dim},
          {"feat_emb_dim", c.feat_emb_dim}, {"input_channels", c.input_channels},
          {"n_heads", c.n_heads},           {"ff_hidden", c.ff_hidden},
          {"out_channels", c.out_channels}, {"res_layers", c.res_layers},
          {"res_channels", c.res_channels}, {"diff_emb_dim", c.diff_emb_dim}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_features = j.at("n_features");
  c.time_emb_dim = j.at("time_emb_dim");
  c.feat_emb_dim = j.at("feat_emb_dim");
  c.input_channels = j.at("input_channels");
  c.n_heads = j.at("n_heads");
  c.ff_hidden = j.at("ff_hidden");
  c.out_channels = j.at("out_channels");
  c.res_layers = j.at("res_layers");
  c.res_channels = j.at("res_channels");
  c.diff_emb_dim = j.at("diff_emb_dim");
  return c;
}

nlohmann::json train_config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"decay_point_1", c.decay_point_1},
          {"decay_point_2", c.decay_point_2},
          {"weight_decay", c.weight_decay},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"mask_kind", mask_kind_name(c.mask_kind)},
          {"seed", c.seed},
          {"T", c.T},
          {"beta_min", c.beta_min},
          {"beta_max", c.beta_max},
          {"horizon", c.horizon},
          {"K_feat", c.K_feat},
          {"deterministic", c.deterministic}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.decay_point_1 = j.at("decay_point_1");
  c.decay_point_2 = j.at("decay_point_2");
  c.weight_decay = j.at("weight_decay");
  c.adam_beta1 = j.at("adam_beta1");
  c.adam_beta2 = j.at("adam_beta2");
  c.adam_eps = j.at("adam_eps");
  c.mask_kind = mask_kind_from_name(j.at("mask_kind"));
  c.seed = j.at("seed");
  c.T = j.at("T");
  c.beta_min = j.at("beta_min");
  c.beta_max = j.at("beta_max");
  c.horizon = j.at("horizon");
  c.K_feat = j.at("K_feat");
  c.deterministic = j.at("deterministic");
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& config,
                     const Normalizer* normalizer) {
  nlohmann::json meta;
  meta["format_version"] = kVersion;
  meta["model_config"] = model_config_json(state.model.config);
  meta["train_config"] = train_config_json(config);
  meta["epoch"] = state.epoch;
  meta["adam_step"] = state.opt.step;
  meta["rng_state"] = state.rng.serialize();
  meta["epoch_losses"] = state.epoch_losses;
  if (normalizer) {
    meta["normalizer"] = {{"mean", normalizer->mean}, {"std", normalizer->std}};
  }
  if (state.model.projection_head) meta["projection_head_K"] = state.model.projection_head->K;
  if (state.model.classifier_head) {
    meta["classifier_input_dim"] = state.model.classifier_head->input_dim;
    meta["classifier_n_classes"] = state.model.classifier_head->n_classes;
    meta["classifier_dropout"] = state.model.classifier_head->dropout;
  }
  const std::string meta_str = meta.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_u64(os, meta_str.size());
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  std::vector<std::pair<std::string, Tensor>> tensors;
  visit_params(state.model, [&](const std::string& name, const ad::Var& v) {
    tensors.emplace_back(name, v->val);
  });
  for (const auto& [name, slot] : state.opt.slots) {
    tensors.emplace_back("adam.m." + name, slot.m);
    tensors.emplace_back("adam.v." + name, slot.v);
  }
  write_u64(os, tensors.size());
  for (const auto& [name, t] : tensors) write_tensor(os, name, t);
  if (!os) throw std::runtime_error("save_checkpoint: write failure on " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a tsde checkpoint");
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported format version " +
                             std::to_string(version));
  const uint64_t meta_len = read_u64(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  nlohmann::json meta = nlohmann::json::parse(meta_str);

  LoadedCheckpoint out;
  out.config = train_config_from_json(meta.at("train_config"));
  const ModelConfig mc = model_config_from_json(meta.at("model_config"));

  Rng scratch(0);
  out.state.model = init_model(mc, scratch);
  if (meta.contains("projection_head_K"))
    out.state.model.projection_head = std::make_shared<ProjectionHeadParams>(
        init_projection_head(mc, meta.at("projection_head_K"), scratch));
  if (meta.contains("classifier_n_classes")) {
    auto head = std::make_shared<ClassifierHeadParams>();
    head->input_dim = meta.at("classifier_input_dim");
    head->n_classes = meta.at("classifier_n_classes");
    head->dropout = meta.at("classifier_dropout");
    head->l1 = {ad::param(Tensor::zeros({head->input_dim, 256})),
                ad::param(Tensor::zeros({256}))};
    head->l2 = {ad::param(Tensor::zeros({256, 256})), ad::param(Tensor::zeros({256}))};
    head->l3 = {ad::param(Tensor::zeros({256, head->n_classes})),
                ad::param(Tensor::zeros({head->n_classes}))};
    out.state.model.classifier_head = head;
  }
  out.state.epoch = meta.at("epoch");
  out.state.opt.step = meta.at("adam_step");
  out.state.rng.deserialize(meta.at("rng_state"));
  if (meta.contains("epoch_losses"))
    out.state.epoch_losses = meta.at("epoch_losses").get<std::vector<double>>();
  if (meta.contains("normalizer")) {
    out.has_normalizer = true;
    out.normalizer.mean = meta.at("normalizer").at("mean").get<std::vector<double>>();
    out.normalizer.std = meta.at("normalizer").at("std").get<std::vector<double>>();
  }

  const uint64_t n_tensors = read_u64(is);
  std::map<std::string, Tensor> loaded;
  for (uint64_t i = 0; i < n_tensors; ++i) {
    auto [name, t] = read_tensor(is);
    loaded.emplace(std::move(name), std::move(t));
  }

  visit_params(out.state.model, [&](const std::string& name, const ad::Var& v) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw std::runtime_error("load_checkpoint: missing tensor " + name);
    if (!it->second.same_shape(v->val))
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name + ": file " +
                               it->second.shape_str() + " vs model " + v->val.shape_str());
    const_cast<ad::Var&>(v)->val = it->second;
  });
  for (const auto& [name, t] : loaded) {
    if (name.rfind("adam.m.", 0) == 0)
      out.state.opt.slots[name.substr(7)].m = t;
    else if (name.rfind("adam.v.", 0) == 0)
      out.state.opt.slots[name.substr(7)].v = t;
  }
  return out;
}

}  // namespace tsde
