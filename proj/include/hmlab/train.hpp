#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hmlab/config.hpp"
#include "hmlab/dataset.hpp"
#include "hmlab/defenses.hpp"
#include "hmlab/encoder.hpp"
#include "hmlab/robustness.hpp"
#include "json.hpp"

namespace hmlab {

enum class RunStatus { Ok, Collapsed, NonFinite };
std::string to_string(RunStatus status);
RunStatus parse_run_status(std::string_view text);

/// Per-epoch means over the epoch's optimizer steps, plus end-of-epoch evaluation.
struct EpochRow {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps completed so far; monotone
  double benign_loss = 0.0;
  double adversarial_loss = 0.0;  // triplet term on the perturbed triplets
  double ics_term = 0.0;
  double source_hardness = 0.0;
  double perturbed_hardness = 0.0;
  double destination_hardness = 0.0;
  double normalized_loss = 0.0;
  double collapse_similarity = 0.0;
  double r_at_1 = 0.0;
  std::size_t backward_passes_per_iteration = 0;

  friend bool operator==(const EpochRow&, const EpochRow&) = default;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochRow> epochs;
  RunStatus status = RunStatus::Ok;
  std::string diagnostic;  // why the run stopped early, if it did
  std::optional<RobustnessReport> report;

  /// Backward passes per optimizer step: pgd_steps + 1 for adversarial defenses, else 1.
  std::size_t training_cost() const;
};

struct TrainOptions {
  /// Called after every optimizer step.
  std::function<void(const EncoderModel&, const StepDiagnostics&)> on_step;
  /// Called after each epoch row is appended.
  std::function<void(const EpochRow&)> on_epoch;
};

struct TrainResult {
  EncoderModel model;
  RunRecord record;
};

/// Trains one encoder. Non-finite losses and collapse end the run early with
/// the matching status instead of throwing. Throws ConfigError on bad configs.
TrainResult train(const TrainConfig& config, const SyntheticDataset& dataset, const TrainOptions& options = {});

nlohmann::json to_json(const EpochRow& row);
EpochRow epoch_row_from_json(const nlohmann::json& j);
nlohmann::json summary_json(const RunRecord& record);
RunRecord record_from_summary(const nlohmann::json& j);

/// Writes <stem>.jsonl (one epoch row per line) and <stem>.summary.json.
void write_run_record(const RunRecord& record, const std::filesystem::path& stem);
/// Reads a summary JSON written by write_run_record.
RunRecord read_run_record(const std::filesystem::path& summary_path);

}  // namespace hmlab
