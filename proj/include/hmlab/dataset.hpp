#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hmlab/robustness.hpp"
#include "hmlab/samplers.hpp"
#include "hmlab/tensor.hpp"
#include "json.hpp"

namespace hmlab {

struct DatasetConfig {
  std::size_t classes = 8;
  std::size_t input_dim = 16;
  std::size_t train_per_class = 64;
  std::size_t eval_per_class = 32;
  double sigma = 0.05;
  std::uint64_t seed = 0;
};

/// Gaussian clusters around prototypes drawn in [0.2, 0.8]^n with pairwise
/// distance >= 0.5; samples clipped to [0, 1].
struct SyntheticDataset {
  DatasetConfig config;
  Tensor prototypes;  // [C x n]
  Tensor train_inputs;
  std::vector<int> train_labels;
  Tensor eval_inputs;
  std::vector<int> eval_labels;

  /// Eval split as retrieval corpus: the first half of each class queries, the rest is gallery.
  EvalCorpus corpus() const;
};

SyntheticDataset generate_dataset(const DatasetConfig& config);

nlohmann::json to_json(const SyntheticDataset& dataset);
SyntheticDataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const SyntheticDataset& dataset, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);

/// Row-index batches for one epoch: P classes x K samples, each class pool
/// shuffled and consumed without replacement.
std::vector<std::vector<std::size_t>> epoch_batches(std::span<const int> labels, std::size_t classes_per_batch,
                                                    std::size_t samples_per_class, Rng& rng);

LabeledBatch make_batch(const Tensor& inputs, std::span<const int> labels, std::span<const std::size_t> rows);

}  // namespace hmlab
