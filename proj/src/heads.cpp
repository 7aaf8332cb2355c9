#include "tsde/heads.hpp"

#include <cmath>
#include <stdexcept>

#include "tsde/embedder.hpp"
#include "tsde/trainer.hpp"

namespace tsde {

namespace {

// [K, L, C] embedding -> [L, K * (C - 1)] rows, mask channel dropped.
Tensor projection_inputs(const Tensor& z_tensor) {
  const int64_t K = z_tensor.dim(0), L = z_tensor.dim(1), C = z_tensor.dim(2);
  Tensor rows({L, K * (C - 1)});
  for (int64_t l = 0; l < L; ++l)
    for (int64_t k = 0; k < K; ++k)
      for (int64_t c = 0; c < C - 1; ++c)
        rows.at(l, k * (C - 1) + c) = z_tensor.at(k, l, c);
  return rows;
}

Tensor detached_embedding(const ModelParams& model, const Series& inst) {
  Tensor x_cond(inst.values.shape());
  for (int64_t i = 0; i < x_cond.numel(); ++i)
    x_cond[i] = inst.values[i] * inst.obs_mask[i];
  Embedding z = embed(model.embedder, model.config, x_cond, inst.obs_mask, inst.feature_ids);
  return z.as_tensor();
}

std::vector<std::pair<std::string, ad::Var>> head_param_list(const ProjectionHeadParams& head) {
  return {{"head.projection.proj.W", head.proj.W}, {"head.projection.proj.b", head.proj.b}};
}

std::vector<std::pair<std::string, ad::Var>> head_param_list(const ClassifierHeadParams& head) {
  return {{"head.classifier.l1.W", head.l1.W}, {"head.classifier.l1.b", head.l1.b},
          {"head.classifier.l2.W", head.l2.W}, {"head.classifier.l2.b", head.l2.b},
          {"head.classifier.l3.W", head.l3.W}, {"head.classifier.l3.b", head.l3.b}};
}

ad::Var classifier_logits(const ClassifierHeadParams& head, const Tensor& z_flat, Rng* dropout_rng) {
  ad::Var x = ad::constant(z_flat.reshaped({1, z_flat.numel()}));
  auto dense = [](const ad::Var& in, const LinearParams& p) {
    return ad::add_rowvec(ad::matmul(in, p.W), p.b);
  };
  auto dropout = [&](const ad::Var& in) {
    if (dropout_rng == nullptr || head.dropout <= 0.0) return in;
    Tensor mask(in->val.shape());
    const double keep = 1.0 - head.dropout;
    for (int64_t i = 0; i < mask.numel(); ++i)
      mask[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    return ad::cmul(in, mask);
  };
  ad::Var h = dropout(ad::silu(dense(x, head.l1)));
  h = dropout(ad::silu(dense(h, head.l2)));
  return dense(h, head.l3);
}

}  // namespace

Tensor project_reconstruct(const ProjectionHeadParams& head, const Tensor& z_tensor) {
  if (z_tensor.rank() != 3) throw std::invalid_argument("project_reconstruct: z must be [K,L,C]");
  const int64_t K = z_tensor.dim(0), L = z_tensor.dim(1), C = z_tensor.dim(2);
  if (head.proj.W->val.dim(0) != K * (C - 1))
    throw std::invalid_argument("project_reconstruct: head was built for K=" +
                                std::to_string(head.K) + ", got K=" + std::to_string(K));
  ad::Var rows = ad::constant(projection_inputs(z_tensor));
  ad::Var recon = ad::add_rowvec(ad::matmul(rows, head.proj.W), head.proj.b);  // [L, K]
  Tensor out({K, L});
  for (int64_t l = 0; l < L; ++l)
    for (int64_t k = 0; k < K; ++k) out.at(k, l) = recon->val.at(l, k);
  return out;
}

void finetune_projection(ModelParams& model, const Dataset& data, const HeadTrainConfig& config) {
  if (data.instances.empty()) throw std::invalid_argument("finetune_projection: empty dataset");
  const int64_t K = data.instances.front().K();
  Rng rng(config.seed);
  if (!model.projection_head)
    model.projection_head =
        std::make_shared<ProjectionHeadParams>(init_projection_head(model.config, K, rng));
  if (model.projection_head->K != K)
    throw std::invalid_argument("finetune_projection: head K=" +
                                std::to_string(model.projection_head->K) + " vs dataset K=" +
                                std::to_string(K));

  // Embeddings never change while the head trains; compute them once.
  std::vector<Tensor> inputs;
  inputs.reserve(data.instances.size());
  for (const Series& inst : data.instances)
    inputs.push_back(projection_inputs(detached_embedding(model, inst)));

  TrainConfig adam;
  adam.weight_decay = config.weight_decay;
  AdamState opt;
  auto params = head_param_list(*model.projection_head);

  std::vector<size_t> order(data.instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int e = 1; e <= config.epochs; ++e) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      for (auto& [name, v] : params) v->zero_grad();
      ad::Var total;
      for (size_t bi = start; bi < stop; ++bi) {
        const Series& inst = data.instances[order[bi]];
        const int64_t L = inst.L();
        ad::Var recon = ad::add_rowvec(
            ad::matmul(ad::constant(inputs[order[bi]]), model.projection_head->proj.W),
            model.projection_head->proj.b);  // [L, K]
        Tensor truth_t({L, K});
        Tensor mask_t({L, K});
        double observed = 0;
        for (int64_t l = 0; l < L; ++l)
          for (int64_t k = 0; k < K; ++k) {
            truth_t.at(l, k) = inst.values.at(k, l);
            mask_t.at(l, k) = inst.obs_mask.at(k, l);
            observed += inst.obs_mask.at(k, l);
          }
        ad::Var diff = ad::cmul(ad::sub(recon, ad::constant(std::move(truth_t))), mask_t);
        ad::Var loss = ad::scale(ad::sum_all(ad::mul(diff, diff)),
                                 1.0 / std::max(1.0, observed));
        total = total ? ad::add(total, loss) : loss;
      }
      total = ad::scale(total, 1.0 / static_cast<double>(stop - start));
      if (!std::isfinite(total->val[0]))
        throw std::runtime_error("finetune_projection: non-finite loss");
      ad::backward(total);
      adam_step_subset(params, opt, adam, config.lr);
    }
  }
}

std::vector<double> anomaly_scores(const ModelParams& model, const SeriesBatch& instances) {
  if (!model.projection_head)
    throw std::runtime_error("anomaly_scores: model has no projection head");
  std::vector<double> scores;
  for (const Series& inst : instances) {
    Tensor z = detached_embedding(model, inst);
    Tensor recon = project_reconstruct(*model.projection_head, z);
    const int64_t K = inst.K(), L = inst.L();
    for (int64_t l = 0; l < L; ++l) {
      double acc = 0;
      for (int64_t k = 0; k < K; ++k) {
        const double d = recon.at(k, l) - inst.values.at(k, l);
        acc += d * d;
      }
      scores.push_back(acc / static_cast<double>(K));
    }
  }
  return scores;
}

DetectionResult detect(const ModelParams& model, const SeriesBatch& instances, double threshold,
                       const std::vector<int>* gt) {
  DetectionResult r;
  r.scores = anomaly_scores(model, instances);
  r.pred.resize(r.scores.size());
  for (size_t i = 0; i < r.scores.size(); ++i) r.pred[i] = r.scores[i] > threshold ? 1 : 0;
  if (gt != nullptr) {
    if (gt->size() != r.pred.size())
      throw std::invalid_argument("detect: ground truth length mismatch");
    r.adjusted = adjust_predictions(r.pred, *gt);
    r.metrics = precision_recall_f1(r.adjusted, *gt);
  }
  return r;
}

std::vector<double> train_classifier(ModelParams& model, const SeriesBatch& labeled,
                                     int64_t n_classes, const HeadTrainConfig& config) {
  if (labeled.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  const int64_t K = labeled.front().K(), L = labeled.front().L();
  for (const Series& s : labeled)
    if (s.label < 0 || s.label >= n_classes)
      throw std::invalid_argument("train_classifier: label out of range");
  Rng rng(config.seed);
  if (!model.classifier_head)
    model.classifier_head = std::make_shared<ClassifierHeadParams>(
        init_classifier_head(model.config, K, L, n_classes, rng));
  if (model.classifier_head->n_classes != n_classes ||
      model.classifier_head->input_dim != K * L * model.config.embed_channels())
    throw std::invalid_argument("train_classifier: head dimensions do not match dataset");

  std::vector<Tensor> inputs;
  inputs.reserve(labeled.size());
  for (const Series& inst : labeled) inputs.push_back(detached_embedding(model, inst));

  TrainConfig adam;
  adam.weight_decay = config.weight_decay;
  AdamState opt;
  auto params = head_param_list(*model.classifier_head);

  std::vector<size_t> order(labeled.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> epoch_losses;

  for (int e = 1; e <= config.epochs; ++e) {
    rng.shuffle(order);
    double loss_sum = 0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      for (auto& [name, v] : params) v->zero_grad();
      ad::Var total;
      for (size_t bi = start; bi < stop; ++bi) {
        const Series& inst = labeled[order[bi]];
        ad::Var logits = classifier_logits(*model.classifier_head, inputs[order[bi]], &rng);
        // Stable cross-entropy: shift by the max before the log-sum-exp.
        double mx = logits->val[0];
        for (int64_t c = 1; c < n_classes; ++c) mx = std::max(mx, logits->val[c]);
        ad::Var shifted = ad::sub(logits, ad::constant(Tensor::full({1, n_classes}, mx)));
        ad::Var lse = ad::log_op(ad::sum_all(ad::exp_op(shifted)));
        Tensor onehot({1, n_classes});
        onehot.at(0, inst.label) = 1.0;
        ad::Var picked = ad::sum_all(ad::cmul(shifted, onehot));
        ad::Var loss = ad::sub(lse, picked);
        total = total ? ad::add(total, loss) : loss;
      }
      total = ad::scale(total, 1.0 / static_cast<double>(stop - start));
      if (!std::isfinite(total->val[0]))
        throw std::runtime_error("train_classifier: non-finite loss");
      ad::backward(total);
      adam_step_subset(params, opt, adam, config.lr);
      loss_sum += total->val[0];
      ++batches;
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  return epoch_losses;
}

std::vector<double> classify_probs(const ModelParams& model, const Series& instance) {
  if (!model.classifier_head)
    throw std::runtime_error("classify_probs: model has no classifier head");
  Tensor z = detached_embedding(model, instance);
  ad::Var logits = classifier_logits(*model.classifier_head, z, nullptr);
  ad::Var probs = ad::softmax_last(logits);
  std::vector<double> out(static_cast<size_t>(probs->val.numel()));
  for (int64_t i = 0; i < probs->val.numel(); ++i) out[static_cast<size_t>(i)] = probs->val[i];
  return out;
}

}  // namespace tsde
