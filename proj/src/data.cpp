#include "tsde/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tsde {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(strip(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string resolve_relative(const std::string& base_file, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_file).parent_path() / p).string();
}

}  // namespace

RawSeries load_csv(const std::string& path, const std::string& missing_token) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  RawSeries raw;
  raw.feature_names = split_csv_line(line);
  const size_t K = raw.feature_names.size();
  if (K == 0) throw std::runtime_error("load_csv: no header columns in " + path);
  const std::string miss = lower(missing_token);

  std::vector<std::vector<double>> cols(K);
  std::vector<std::vector<double>> mask(K);
  int64_t row_idx = 0;
  while (std::getline(in, line)) {
    ++row_idx;
    if (strip(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != K)
      throw std::runtime_error("load_csv: row " + std::to_string(row_idx) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(K));
    for (size_t k = 0; k < K; ++k) {
      if (cells[k].empty() || lower(cells[k]) == miss) {
        cols[k].push_back(0.0);
        mask[k].push_back(0.0);
        continue;
      }
      try {
        size_t pos = 0;
        double v = std::stod(cells[k], &pos);
        if (pos != cells[k].size()) throw std::invalid_argument("trailing chars");
        cols[k].push_back(v);
        mask[k].push_back(1.0);
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: row " + std::to_string(row_idx) + " column '" +
                                 raw.feature_names[k] + "': not a number: '" + cells[k] + "'");
      }
    }
  }
  const int64_t T = static_cast<int64_t>(cols[0].size());
  if (T == 0) throw std::runtime_error("load_csv: no rows in " + path);
  raw.values = Tensor({static_cast<int64_t>(K), T});
  raw.obs_mask = Tensor({static_cast<int64_t>(K), T});
  for (size_t k = 0; k < K; ++k)
    for (int64_t t = 0; t < T; ++t) {
      raw.values.at(static_cast<int64_t>(k), t) = cols[k][static_cast<size_t>(t)];
      raw.obs_mask.at(static_cast<int64_t>(k), t) = mask[k][static_cast<size_t>(t)];
    }
  return raw;
}

void save_csv(const std::string& path, const Tensor& values,
              const std::vector<std::string>& feature_names, const Tensor* obs_mask,
              const std::string& missing_token) {
  if (values.rank() != 2) throw std::invalid_argument("save_csv: values must be [K,T]");
  const int64_t K = values.dim(0), T = values.dim(1);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot write " + path);
  out.precision(17);
  for (int64_t k = 0; k < K; ++k) {
    if (k) out << ",";
    out << (k < static_cast<int64_t>(feature_names.size()) ? feature_names[static_cast<size_t>(k)]
                                                           : "f" + std::to_string(k));
  }
  out << "\n";
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t k = 0; k < K; ++k) {
      if (k) out << ",";
      if (obs_mask && (*obs_mask).at(k, t) == 0.0)
        out << missing_token;
      else
        out << values.at(k, t);
    }
    out << "\n";
  }
}

Tensor Normalizer::normalize(const Tensor& values, const Tensor& obs_mask) const {
  if (values.rank() != 2 || !values.same_shape(obs_mask))
    throw std::invalid_argument("Normalizer::normalize: bad shapes");
  const int64_t K = values.dim(0);
  if (K != static_cast<int64_t>(mean.size()))
    throw std::invalid_argument("Normalizer::normalize: feature count mismatch");
  Tensor out(values.shape());
  const int64_t T = values.dim(1);
  for (int64_t k = 0; k < K; ++k)
    for (int64_t t = 0; t < T; ++t)
      out.at(k, t) = obs_mask.at(k, t) == 1.0
                         ? (values.at(k, t) - mean[static_cast<size_t>(k)]) /
                               std[static_cast<size_t>(k)]
                         : 0.0;  // missing entries zero-filled after normalization
  return out;
}

Tensor Normalizer::denormalize(const Tensor& values) const {
  if (values.rank() != 2 || values.dim(0) != static_cast<int64_t>(mean.size()))
    throw std::invalid_argument("Normalizer::denormalize: bad shapes");
  Tensor out(values.shape());
  const int64_t K = values.dim(0), T = values.dim(1);
  for (int64_t k = 0; k < K; ++k)
    for (int64_t t = 0; t < T; ++t)
      out.at(k, t) = values.at(k, t) * std[static_cast<size_t>(k)] + mean[static_cast<size_t>(k)];
  return out;
}

Normalizer fit_normalizer(const RawSeries& train) {
  const int64_t K = train.values.dim(0), T = train.values.dim(1);
  Normalizer n;
  n.mean.resize(static_cast<size_t>(K));
  n.std.resize(static_cast<size_t>(K));
  for (int64_t k = 0; k < K; ++k) {
    double sum = 0;
    int64_t cnt = 0;
    for (int64_t t = 0; t < T; ++t)
      if (train.obs_mask.at(k, t) == 1.0) {
        sum += train.values.at(k, t);
        ++cnt;
      }
    if (cnt == 0) {
      n.mean[static_cast<size_t>(k)] = 0.0;
      n.std[static_cast<size_t>(k)] = 1.0;
      continue;
    }
    const double mean = sum / static_cast<double>(cnt);
    double sq = 0;
    for (int64_t t = 0; t < T; ++t)
      if (train.obs_mask.at(k, t) == 1.0) {
        const double d = train.values.at(k, t) - mean;
        sq += d * d;
      }
    const double sd = std::sqrt(sq / static_cast<double>(cnt));  // population std
    n.mean[static_cast<size_t>(k)] = mean;
    n.std[static_cast<size_t>(k)] = std::max(sd, Normalizer::kStdFloor);
  }
  return n;
}

SeriesBatch window(const RawSeries& series, int64_t L, int64_t stride) {
  const int64_t K = series.values.dim(0), T = series.values.dim(1);
  if (L > T)
    throw std::invalid_argument("window: L=" + std::to_string(L) + " exceeds series length " +
                                std::to_string(T));
  if (L < 1 || stride < 1) throw std::invalid_argument("window: L and stride must be >= 1");
  const int64_t count = (T - L) / stride + 1;
  SeriesBatch out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t w = 0; w < count; ++w) {
    const int64_t off = w * stride;
    Series s;
    s.values = Tensor({K, L});
    s.obs_mask = Tensor({K, L});
    for (int64_t k = 0; k < K; ++k)
      for (int64_t l = 0; l < L; ++l) {
        s.values.at(k, l) = series.values.at(k, off + l);
        s.obs_mask.at(k, l) = series.obs_mask.at(k, off + l);
      }
    s.feature_ids.resize(static_cast<size_t>(K));
    for (int64_t k = 0; k < K; ++k) s.feature_ids[static_cast<size_t>(k)] = k;
    out.push_back(std::move(s));
  }
  return out;
}

Series synth_generate(int64_t L, uint64_t seed, int64_t period) {
  if (L < 2) throw std::invalid_argument("synth_generate: L must be >= 2");
  if (period < 1) throw std::invalid_argument("synth_generate: period must be >= 1");
  Rng rng(seed);
  Series s;
  s.values = Tensor({3, L});
  s.obs_mask = Tensor::full({3, L}, 1.0);
  for (int64_t l = 0; l < L; ++l) {
    s.values.at(0, l) = static_cast<double>(l) / static_cast<double>(L - 1);
    s.values.at(1, l) = std::sin(2.0 * M_PI * static_cast<double>(l) / static_cast<double>(period));
    s.values.at(2, l) = rng.normal();
  }
  s.feature_ids = {0, 1, 2};
  return s;
}

SeriesBatch subsample_features(const SeriesBatch& batch, int64_t K_feat, Rng& rng) {
  if (K_feat <= 0) throw std::invalid_argument("subsample_features: K_feat must be positive");
  SeriesBatch out;
  out.reserve(batch.size());
  for (const Series& s : batch) {
    const int64_t K = s.K(), L = s.L();
    if (K_feat > K)
      throw std::invalid_argument("subsample_features: K_feat exceeds feature count");
    auto pick = rng.sample_without_replacement(K, K_feat);
    Series sub;
    sub.values = Tensor({K_feat, L});
    sub.obs_mask = Tensor({K_feat, L});
    sub.label = s.label;
    sub.feature_ids.resize(static_cast<size_t>(K_feat));
    for (int64_t i = 0; i < K_feat; ++i) {
      const int64_t k = pick[static_cast<size_t>(i)];
      sub.feature_ids[static_cast<size_t>(i)] = s.feature_ids[static_cast<size_t>(k)];
      for (int64_t l = 0; l < L; ++l) {
        sub.values.at(i, l) = s.values.at(k, l);
        sub.obs_mask.at(i, l) = s.obs_mask.at(k, l);
      }
    }
    out.push_back(std::move(sub));
  }
  return out;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  DatasetManifest m;
  m.train_csv = resolve_relative(path, j.value("train", ""));
  m.val_csv = resolve_relative(path, j.value("val", ""));
  m.test_csv = resolve_relative(path, j.value("test", ""));
  m.L = j.value("L", 0);
  m.stride = j.value("stride", 1);
  m.horizon = j.value("L2", 0);
  m.K_feat = j.value("K_feat", 0);
  m.missing_token = j.value("missing_token", "NaN");
  m.train_labels = resolve_relative(path, j.value("train_labels", ""));
  m.test_labels = resolve_relative(path, j.value("test_labels", ""));
  if (m.L <= 0) throw std::runtime_error("load_manifest: missing or invalid window length L");
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known = {"train", "val",    "test",          "L",
                                                   "stride", "L2",    "K_feat",        "missing_token",
                                                   "train_labels",    "test_labels"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::runtime_error("load_manifest: unknown key '" + key + "'");
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["train"] = m.train_csv;
  j["val"] = m.val_csv;
  j["test"] = m.test_csv;
  j["L"] = m.L;
  j["stride"] = m.stride;
  j["L2"] = m.horizon;
  j["K_feat"] = m.K_feat;
  j["missing_token"] = m.missing_token;
  if (!m.train_labels.empty()) j["train_labels"] = m.train_labels;
  if (!m.test_labels.empty()) j["test_labels"] = m.test_labels;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_manifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

RawSeries load_raw_split(const DatasetManifest& manifest, const std::string& split) {
  std::string path;
  if (split == "train")
    path = manifest.train_csv;
  else if (split == "val")
    path = manifest.val_csv;
  else if (split == "test")
    path = manifest.test_csv;
  else
    throw std::invalid_argument("load_raw_split: unknown split '" + split + "'");
  if (path.empty()) throw std::runtime_error("load_raw_split: manifest has no " + split + " csv");
  return load_csv(path, manifest.missing_token);
}

Dataset load_split(const DatasetManifest& manifest, const std::string& split,
                   const Normalizer& norm) {
  RawSeries raw = load_raw_split(manifest, split);
  RawSeries normalized;
  normalized.values = norm.normalize(raw.values, raw.obs_mask);
  normalized.obs_mask = raw.obs_mask;
  normalized.feature_names = raw.feature_names;
  // Evaluation splits conventionally use stride = horizon for disjoint windows.
  int64_t stride = manifest.stride;
  if (split != "train" && manifest.horizon > 0) stride = manifest.horizon;
  Dataset d;
  d.instances = window(normalized, manifest.L, stride);
  d.n_features = raw.values.dim(0);

  std::string labels_path;
  if (split == "train")
    labels_path = manifest.train_labels;
  else if (split == "test")
    labels_path = manifest.test_labels;
  if (!labels_path.empty()) {
    auto labels = load_labels(labels_path);
    if (labels.size() != d.instances.size())
      throw std::runtime_error("load_split: label count " + std::to_string(labels.size()) +
                               " != window count " + std::to_string(d.instances.size()));
    for (size_t i = 0; i < labels.size(); ++i) d.instances[i].label = labels[i];
  }
  return d;
}

std::vector<int> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_labels: cannot open " + path);
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    line = strip(line);
    if (line.empty() || line == "label") continue;
    out.push_back(std::stoi(line));
  }
  return out;
}

}  // namespace tsde
