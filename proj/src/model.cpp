#include "tsde/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace tsde {

void ModelConfig::validate() const {
  if (n_features < 1) throw std::invalid_argument("ModelConfig: n_features must be >= 1");
  if (d_model() % n_heads != 0)
    throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model()) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  if (time_emb_dim % 2 != 0 || diff_emb_dim % 2 != 0)
    throw std::invalid_argument("ModelConfig: embedding dims must be even");
  if (res_layers < 1 || res_channels < 1 || out_channels < 1 || ff_hidden < 1)
    throw std::invalid_argument("ModelConfig: invalid layer sizes");
}

ModelConfig ModelConfig::micro(int64_t n_features) {
  ModelConfig c;
  c.n_features = n_features;
  c.time_emb_dim = 16;
  c.feat_emb_dim = 8;
  c.input_channels = 8;
  c.n_heads = 4;
  c.ff_hidden = 16;
  c.out_channels = 8;
  c.res_layers = 4;
  c.res_channels = 8;
  c.diff_emb_dim = 16;
  return c;
}

namespace {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

LinearParams init_linear(int64_t in, int64_t out, Rng& rng) {
  return {ad::param(uniform_init({in, out}, in, rng)), ad::param(uniform_init({out}, in, rng))};
}

LinearParams init_linear_zero(int64_t in, int64_t out) {
  return {ad::param(Tensor::zeros({in, out})), ad::param(Tensor::zeros({out}))};
}

EncoderLayerParams init_encoder(int64_t d, int64_t ff, Rng& rng) {
  EncoderLayerParams e;
  e.q = init_linear(d, d, rng);
  e.k = init_linear(d, d, rng);
  e.v = init_linear(d, d, rng);
  e.o = init_linear(d, d, rng);
  e.ff1 = init_linear(d, ff, rng);
  e.ff2 = init_linear(ff, d, rng);
  e.ln1 = {ad::param(Tensor::full({d}, 1.0)), ad::param(Tensor::zeros({d}))};
  e.ln2 = {ad::param(Tensor::full({d}, 1.0)), ad::param(Tensor::zeros({d}))};
  return e;
}

void visit_linear(const std::string& prefix, const LinearParams& p, const ParamVisitor& fn) {
  fn(prefix + ".W", p.W);
  fn(prefix + ".b", p.b);
}

void visit_encoder(const std::string& prefix, const EncoderLayerParams& e,
                   const ParamVisitor& fn) {
  visit_linear(prefix + ".q", e.q, fn);
  visit_linear(prefix + ".k", e.k, fn);
  visit_linear(prefix + ".v", e.v, fn);
  visit_linear(prefix + ".o", e.o, fn);
  visit_linear(prefix + ".ff1", e.ff1, fn);
  visit_linear(prefix + ".ff2", e.ff2, fn);
  fn(prefix + ".ln1.gamma", e.ln1.gamma);
  fn(prefix + ".ln1.beta", e.ln1.beta);
  fn(prefix + ".ln2.gamma", e.ln2.gamma);
  fn(prefix + ".ln2.beta", e.ln2.beta);
}

}  // namespace

ModelParams init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams m;
  m.config = config;
  const int64_t d = config.d_model();

  m.embedder.in_proj = init_linear(1, config.input_channels, rng);
  m.embedder.enc_time = init_encoder(d, config.ff_hidden, rng);
  m.embedder.enc_feat = init_encoder(d, config.ff_hidden, rng);
  m.embedder.out_proj_a = init_linear(d, config.out_channels, rng);
  m.embedder.out_proj_b = init_linear(d, config.out_channels, rng);
  Tensor table({config.n_features, config.feat_emb_dim});
  for (int64_t i = 0; i < table.numel(); ++i) table[i] = rng.normal();
  m.embedder.feat_table = ad::param(std::move(table));

  const int64_t C = config.res_channels;
  m.denoiser.x_proj = init_linear(1, C, rng);
  m.denoiser.layers.resize(static_cast<size_t>(config.res_layers));
  for (auto& layer : m.denoiser.layers) {
    layer.diff_proj = init_linear(config.diff_emb_dim, C, rng);
    layer.cond_proj = init_linear(config.embed_channels(), 2 * C, rng);
    layer.mid_proj = init_linear(C, 2 * C, rng);
    layer.res_skip = init_linear(C, 2 * C, rng);
  }
  m.denoiser.head1 = init_linear(C, C, rng);
  m.denoiser.head2 = init_linear_zero(C, 1);  // eps_hat == 0 at init
  return m;
}

ProjectionHeadParams init_projection_head(const ModelConfig& config, int64_t K, Rng& rng) {
  ProjectionHeadParams h;
  h.K = K;
  const int64_t in = K * (config.embed_channels() - 1);  // mask channel excluded
  h.proj = init_linear(in, K, rng);
  return h;
}

ClassifierHeadParams init_classifier_head(const ModelConfig& config, int64_t K, int64_t L,
                                          int64_t n_classes, Rng& rng) {
  ClassifierHeadParams h;
  h.input_dim = K * L * config.embed_channels();
  h.n_classes = n_classes;
  h.l1 = init_linear(h.input_dim, 256, rng);
  h.l2 = init_linear(256, 256, rng);
  h.l3 = init_linear(256, n_classes, rng);
  return h;
}

void visit_embedder(const EmbedderParams& p, const ParamVisitor& fn) {
  visit_linear("embedder.in_proj", p.in_proj, fn);
  visit_encoder("embedder.enc_time", p.enc_time, fn);
  visit_encoder("embedder.enc_feat", p.enc_feat, fn);
  visit_linear("embedder.out_proj_a", p.out_proj_a, fn);
  visit_linear("embedder.out_proj_b", p.out_proj_b, fn);
  fn("embedder.feat_table", p.feat_table);
}

void visit_denoiser(const DenoiserParams& p, const ParamVisitor& fn) {
  visit_linear("denoiser.x_proj", p.x_proj, fn);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const std::string prefix = "denoiser.layer" + std::to_string(i);
    visit_linear(prefix + ".diff_proj", p.layers[i].diff_proj, fn);
    visit_linear(prefix + ".cond_proj", p.layers[i].cond_proj, fn);
    visit_linear(prefix + ".mid_proj", p.layers[i].mid_proj, fn);
    visit_linear(prefix + ".res_skip", p.layers[i].res_skip, fn);
  }
  visit_linear("denoiser.head1", p.head1, fn);
  visit_linear("denoiser.head2", p.head2, fn);
}

void visit_projection_head(const ProjectionHeadParams& p, const ParamVisitor& fn) {
  visit_linear("head.projection.proj", p.proj, fn);
}

void visit_classifier_head(const ClassifierHeadParams& p, const ParamVisitor& fn) {
  visit_linear("head.classifier.l1", p.l1, fn);
  visit_linear("head.classifier.l2", p.l2, fn);
  visit_linear("head.classifier.l3", p.l3, fn);
}

void visit_backbone(const ModelParams& params, const ParamVisitor& fn) {
  visit_embedder(params.embedder, fn);
  visit_denoiser(params.denoiser, fn);
}

void visit_params(const ModelParams& params, const ParamVisitor& fn) {
  visit_backbone(params, fn);
  if (params.projection_head) visit_projection_head(*params.projection_head, fn);
  if (params.classifier_head) visit_classifier_head(*params.classifier_head, fn);
}

uint64_t backbone_hash(const ModelParams& params) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  visit_backbone(params, [&](const std::string& name, const ad::Var& v) {
    mix(name.data(), name.size());
    mix(v->val.data(), static_cast<size_t>(v->val.numel()) * sizeof(double));
  });
  return h;
}

ModelParams clone_model(const ModelParams& params) {
  Rng scratch(0);
  ModelParams out = init_model(params.config, scratch);
  if (params.projection_head)
    out.projection_head = std::make_shared<ProjectionHeadParams>(
        init_projection_head(params.config, params.projection_head->K, scratch));
  if (params.classifier_head) {
    const auto& c = *params.classifier_head;
    auto head = std::make_shared<ClassifierHeadParams>();
    head->input_dim = c.input_dim;
    head->n_classes = c.n_classes;
    head->dropout = c.dropout;
    head->l1 = {ad::param(c.l1.W->val), ad::param(c.l1.b->val)};
    head->l2 = {ad::param(c.l2.W->val), ad::param(c.l2.b->val)};
    head->l3 = {ad::param(c.l3.W->val), ad::param(c.l3.b->val)};
    out.classifier_head = head;
  }
  std::vector<Tensor> values;
  visit_params(params, [&](const std::string&, const ad::Var& v) { values.push_back(v->val); });
  size_t i = 0;
  visit_params(out, [&](const std::string& name, const ad::Var& v) {
    if (!v->val.same_shape(values[i]))
      throw std::logic_error("clone_model: shape drift at " + name);
    const_cast<ad::Var&>(v)->val = values[i++];
  });
  return out;
}

void zero_all_grads(const ModelParams& params) {
  visit_params(params, [](const std::string&, const ad::Var& v) { v->zero_grad(); });
}

}  // namespace tsde
