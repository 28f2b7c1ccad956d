#include "hmlab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include "hmlab/metric.hpp"

namespace hmlab {

SyntheticDataset generate_dataset(const DatasetConfig& config) {
  if (config.classes < 2) throw ConfigError("dataset needs at least two classes");
  if (config.input_dim == 0) throw ConfigError("input_dim must be positive");
  if (config.train_per_class < 2 || config.eval_per_class < 2) throw ConfigError("need >= 2 samples per class");
  if (config.sigma < 0.0) throw ConfigError("sigma must be >= 0");
  constexpr double kLo = 0.2, kHi = 0.8, kMinSeparation = 0.5;
  constexpr int kMaxTries = 100000;

  Rng rng(config.seed);
  std::uniform_real_distribution<double> unit(kLo, kHi);
  SyntheticDataset ds;
  ds.config = config;
  ds.prototypes = Tensor(Shape{config.classes, config.input_dim});
  for (std::size_t c = 0; c < config.classes; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxTries) throw ConfigError("could not place well-separated prototypes");
      for (double& v : ds.prototypes.row(c)) v = unit(rng);
      bool ok = true;
      for (std::size_t o = 0; o < c && ok; ++o) ok = euclidean(ds.prototypes.row(c), ds.prototypes.row(o)) >= kMinSeparation;
      if (ok) break;
    }
  }

  auto draw = [&](std::size_t per_class, Tensor& inputs, std::vector<int>& labels) {
    inputs = Tensor(Shape{config.classes * per_class, config.input_dim});
    labels.clear();
    std::normal_distribution<double> noise(0.0, config.sigma > 0.0 ? config.sigma : 1.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < config.classes; ++c) {
      for (std::size_t k = 0; k < per_class; ++k, ++row) {
        auto dst = inputs.row(row);
        const auto proto = ds.prototypes.row(c);
        for (std::size_t j = 0; j < config.input_dim; ++j) {
          const double eps = config.sigma > 0.0 ? noise(rng) : 0.0;
          dst[j] = std::clamp(proto[j] + eps, 0.0, 1.0);
        }
        labels.push_back(static_cast<int>(c));
      }
    }
  };
  draw(config.train_per_class, ds.train_inputs, ds.train_labels);
  draw(config.eval_per_class, ds.eval_inputs, ds.eval_labels);
  return ds;
}

EvalCorpus SyntheticDataset::corpus() const {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < eval_labels.size(); ++i) by_class[eval_labels[i]].push_back(i);
  std::vector<std::size_t> q, g;
  for (const auto& [label, rows] : by_class) {
    const std::size_t half = rows.size() / 2;
    q.insert(q.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(half));
    g.insert(g.end(), rows.begin() + static_cast<std::ptrdiff_t>(half), rows.end());
  }
  EvalCorpus corpus;
  corpus.queries = gather_rows(eval_inputs, q);
  corpus.gallery = gather_rows(eval_inputs, g);
  for (std::size_t i : q) corpus.query_labels.push_back(eval_labels[i]);
  for (std::size_t i : g) corpus.gallery_labels.push_back(eval_labels[i]);
  return corpus;
}

nlohmann::json to_json(const SyntheticDataset& ds) {
  const auto& c = ds.config;
  return {{"config",
           {{"classes", c.classes},
            {"input_dim", c.input_dim},
            {"train_per_class", c.train_per_class},
            {"eval_per_class", c.eval_per_class},
            {"sigma", c.sigma},
            {"seed", c.seed}}},
          {"prototypes", ds.prototypes.storage()},
          {"train_inputs", ds.train_inputs.storage()},
          {"train_labels", ds.train_labels},
          {"eval_inputs", ds.eval_inputs.storage()},
          {"eval_labels", ds.eval_labels}};
}

SyntheticDataset dataset_from_json(const nlohmann::json& j) {
  SyntheticDataset ds;
  const auto& c = j.at("config");
  ds.config.classes = c.at("classes");
  ds.config.input_dim = c.at("input_dim");
  ds.config.train_per_class = c.at("train_per_class");
  ds.config.eval_per_class = c.at("eval_per_class");
  ds.config.sigma = c.at("sigma");
  ds.config.seed = c.at("seed");
  const std::size_t n = ds.config.input_dim;
  ds.prototypes = Tensor(Shape{ds.config.classes, n}, j.at("prototypes").get<std::vector<double>>());
  ds.train_labels = j.at("train_labels").get<std::vector<int>>();
  ds.train_inputs = Tensor(Shape{ds.train_labels.size(), n}, j.at("train_inputs").get<std::vector<double>>());
  ds.eval_labels = j.at("eval_labels").get<std::vector<int>>();
  ds.eval_inputs = Tensor(Shape{ds.eval_labels.size(), n}, j.at("eval_inputs").get<std::vector<double>>());
  return ds;
}

void save_dataset(const SyntheticDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out << to_json(dataset).dump() << '\n';
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  return dataset_from_json(nlohmann::json::parse(in));
}

std::vector<std::vector<std::size_t>> epoch_batches(std::span<const int> labels, std::size_t classes_per_batch,
                                                    std::size_t samples_per_class, Rng& rng) {
  if (classes_per_batch < 2 || samples_per_class < 2) throw ConfigError("batch needs P >= 2 classes and K >= 2 samples");
  std::map<int, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < labels.size(); ++i) pools[labels[i]].push_back(i);
  if (pools.size() < classes_per_batch) throw ConfigError("fewer classes than classes_per_batch");
  for (auto& [label, pool] : pools) {
    if (pool.size() < samples_per_class) {
      throw ConfigError("class " + std::to_string(label) + " has fewer samples than samples_per_class");
    }
    std::shuffle(pool.begin(), pool.end(), rng);
  }
  std::map<int, std::size_t> cursor;
  std::vector<std::vector<std::size_t>> batches;
  std::vector<int> classes;
  for (;;) {
    classes.clear();
    for (const auto& [label, pool] : pools) {
      if (pool.size() - cursor[label] >= samples_per_class) classes.push_back(label);
    }
    if (classes.size() < classes_per_batch) break;
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(classes_per_batch);
    std::sort(classes.begin(), classes.end());
    std::vector<std::size_t> batch;
    for (int c : classes) {
      const auto& pool = pools[c];
      for (std::size_t k = 0; k < samples_per_class; ++k) batch.push_back(pool[cursor[c]++]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

LabeledBatch make_batch(const Tensor& inputs, std::span<const int> labels, std::span<const std::size_t> rows) {
  LabeledBatch b;
  b.inputs = gather_rows(inputs, rows);
  for (std::size_t r : rows) b.labels.push_back(labels[r]);
  return b;
}

}  // namespace hmlab
