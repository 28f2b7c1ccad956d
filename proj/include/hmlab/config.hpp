#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hmlab/dataset.hpp"
#include "hmlab/defenses.hpp"
#include "hmlab/encoder.hpp"
#include "hmlab/robustness.hpp"
#include "json.hpp"

namespace hmlab {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t classes_per_batch = 8;  // P
  std::size_t samples_per_class = 4;  // K
  double lr = 1e-3;
  double gamma = 0.2;
  double lambda = 0.5;
  double epsilon = 8.0 / 255.0;
  double alpha = 1.0 / 255.0;
  std::size_t pgd_steps = 8;
  std::size_t eval_pgd_steps = 32;
  std::size_t attack_candidates = 5;
  std::string defense = "none";
  std::string source = "softhard";
  std::string destination = "lga";
  std::uint64_t seed = 0;
  double u = 0.0;  // loss normalizer; 0 means "use gamma"
  double xi = 0.1;
  // dataset
  std::size_t classes = 8;
  std::size_t input_dim = 16;
  std::size_t train_per_class = 64;
  std::size_t eval_per_class = 32;
  double sigma = 0.05;
  std::uint64_t data_seed = 0;
  // encoder
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 32;
  // monitoring
  double collapse_threshold = 0.99;
  std::size_t collapse_patience = 2;
  bool final_attacks = true;

  /// Throws ConfigError with the offending key.
  void validate() const;
  double loss_normalizer() const { return u > 0.0 ? u : gamma; }
  DefenseSpec defense_spec() const;
  DatasetConfig dataset_config() const;
  EncoderConfig encoder_config() const;
  AttackConfig attack_config() const;
};

/// Numbers accept plain decimals or fractions such as "8/255".
double parse_number(std::string_view text);

/// Sets one field by key. Throws ConfigError on unknown keys or bad values.
void set_field(TrainConfig& config, std::string_view key, std::string_view value);

/// Flat "key = value" lines; '#' starts a comment; blank lines ignored.
TrainConfig parse_config_text(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string to_config_text(const TrainConfig& config);
std::vector<std::string> config_keys();

nlohmann::json to_json(const TrainConfig& config);

}  // namespace hmlab
