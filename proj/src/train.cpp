#include "hmlab/train.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

namespace hmlab {

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Ok:
      return "ok";
    case RunStatus::Collapsed:
      return "collapsed";
    case RunStatus::NonFinite:
      return "nan";
  }
  return "unknown";
}

RunStatus parse_run_status(std::string_view text) {
  if (text == "ok") return RunStatus::Ok;
  if (text == "collapsed") return RunStatus::Collapsed;
  if (text == "nan") return RunStatus::NonFinite;
  throw std::invalid_argument("unknown run status '" + std::string(text) + "'");
}

std::size_t RunRecord::training_cost() const {
  return is_adversarial(parse_defense(config.defense)) ? config.pgd_steps + 1 : 1;
}

TrainResult train(const TrainConfig& config, const SyntheticDataset& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.config.input_dim != config.input_dim) {
    throw ConfigError("dataset input_dim " + std::to_string(dataset.config.input_dim) + " does not match config " +
                      std::to_string(config.input_dim));
  }
  const DefenseSpec spec = config.defense_spec();
  const EvalCorpus corpus = dataset.corpus();

  TrainResult result{EncoderModel::initialize(config.encoder_config()), RunRecord{config, {}, RunStatus::Ok, {}, {}}};
  EncoderModel& model = result.model;
  RunRecord& record = result.record;
  AdamState adam(model, AdamConfig{config.lr});
  LossTracker tracker(config.loss_normalizer());
  CollapseMonitor monitor(config.collapse_threshold, config.collapse_patience);
  // Separate stream from the encoder initializer, which seeds with `seed` directly.
  std::seed_seq seq{config.seed, std::uint64_t{0x5eed}};
  Rng rng(seq);
  const std::size_t expected_passes = record.training_cost();

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(dataset.train_labels, config.classes_per_batch, config.samples_per_class, rng);
    EpochRow row;
    row.epoch = epoch;
    for (const auto& rows : batches) {
      const LabeledBatch batch = make_batch(dataset.train_inputs, dataset.train_labels, rows);
      StepDiagnostics d;
      try {
        d = training_step(model, adam, batch, spec, tracker, rng);
      } catch (const std::runtime_error& e) {
        record.status = RunStatus::NonFinite;
        record.diagnostic = "epoch " + std::to_string(epoch) + " step " + std::to_string(step + 1) + ": " + e.what();
      } catch (const std::domain_error& e) {
        record.status = RunStatus::NonFinite;
        record.diagnostic = "epoch " + std::to_string(epoch) + " step " + std::to_string(step + 1) + ": " + e.what();
      }
      if (record.status != RunStatus::Ok) break;
      if (d.backward_passes != expected_passes) {
        throw std::logic_error("training step used " + std::to_string(d.backward_passes) +
                               " backward passes, expected " + std::to_string(expected_passes));
      }
      ++step;
      row.benign_loss += d.benign_loss;
      row.adversarial_loss += d.triplet_term;
      row.ics_term += d.ics_term;
      row.source_hardness += d.source_hardness;
      row.perturbed_hardness += d.perturbed_hardness;
      row.destination_hardness += d.destination_hardness;
      row.normalized_loss += d.normalized_loss;
      if (options.on_step) options.on_step(model, d);
    }
    if (record.status != RunStatus::Ok) break;

    const double n = static_cast<double>(batches.size());
    for (double* v : {&row.benign_loss, &row.adversarial_loss, &row.ics_term, &row.source_hardness,
                      &row.perturbed_hardness, &row.destination_hardness, &row.normalized_loss}) {
      *v /= n;
    }
    row.step = step;
    row.backward_passes_per_iteration = expected_passes;
    const CollapseReading reading = monitor.observe(model.embed_values(dataset.eval_inputs));
    row.collapse_similarity = reading.similarity;
    row.r_at_1 = benign_metrics(model, corpus).r_at_1;
    record.epochs.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    if (reading.collapsed) {
      record.status = RunStatus::Collapsed;
      record.diagnostic = "mean pairwise cosine above " + std::to_string(config.collapse_threshold) + " for " +
                          std::to_string(config.collapse_patience) + " consecutive epochs (epoch " +
                          std::to_string(epoch) + ")";
      break;
    }
  }

  if (record.status == RunStatus::Ok && config.final_attacks) {
    record.report = evaluate_robustness(model, corpus, config.attack_config());
  }
  return result;
}

nlohmann::json to_json(const EpochRow& r) {
  return {{"epoch", r.epoch},
          {"step", r.step},
          {"benign_loss", r.benign_loss},
          {"adversarial_loss", r.adversarial_loss},
          {"ics_term", r.ics_term},
          {"source_hardness", r.source_hardness},
          {"perturbed_hardness", r.perturbed_hardness},
          {"destination_hardness", r.destination_hardness},
          {"normalized_loss", r.normalized_loss},
          {"collapse_similarity", r.collapse_similarity},
          {"r_at_1", r.r_at_1},
          {"backward_passes_per_iteration", r.backward_passes_per_iteration}};
}

EpochRow epoch_row_from_json(const nlohmann::json& j) {
  EpochRow r;
  r.epoch = j.at("epoch");
  r.step = j.at("step");
  r.benign_loss = j.at("benign_loss");
  r.adversarial_loss = j.at("adversarial_loss");
  r.ics_term = j.at("ics_term");
  r.source_hardness = j.at("source_hardness");
  r.perturbed_hardness = j.at("perturbed_hardness");
  r.destination_hardness = j.at("destination_hardness");
  r.normalized_loss = j.at("normalized_loss");
  r.collapse_similarity = j.at("collapse_similarity");
  r.r_at_1 = j.at("r_at_1");
  r.backward_passes_per_iteration = j.at("backward_passes_per_iteration");
  return r;
}

nlohmann::json summary_json(const RunRecord& record) {
  nlohmann::json j;
  j["config"] = to_json(record.config);
  j["status"] = to_string(record.status);
  j["diagnostic"] = record.diagnostic;
  j["training_cost"] = record.training_cost();
  j["evaluation"] = "last-epoch";
  j["epochs"] = nlohmann::json::array();
  for (const auto& row : record.epochs) j["epochs"].push_back(to_json(row));
  if (record.report) {
    j["report"] = to_json(*record.report);
    j["attack_config"] = to_json(record.config.attack_config());
  } else {
    j["report"] = nullptr;
  }
  return j;
}

RunRecord record_from_summary(const nlohmann::json& j) {
  RunRecord r;
  for (const auto& [key, value] : j.at("config").items()) set_field(r.config, key, value.get<std::string>());
  r.status = parse_run_status(j.at("status").get<std::string>());
  r.diagnostic = j.value("diagnostic", "");
  for (const auto& row : j.at("epochs")) r.epochs.push_back(epoch_row_from_json(row));
  if (j.contains("report") && !j.at("report").is_null()) r.report = report_from_json(j.at("report"));
  return r;
}

void write_run_record(const RunRecord& record, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::filesystem::path rows = stem, summary = stem;
  rows += ".jsonl";
  summary += ".summary.json";
  std::ofstream out(rows);
  if (!out) throw std::runtime_error("cannot write " + rows.string());
  for (const auto& row : record.epochs) out << to_json(row).dump() << '\n';
  std::ofstream sout(summary);
  if (!sout) throw std::runtime_error("cannot write " + summary.string());
  sout << summary_json(record).dump(2) << '\n';
}

RunRecord read_run_record(const std::filesystem::path& summary_path) {
  std::ifstream in(summary_path);
  if (!in) throw std::runtime_error("cannot read " + summary_path.string());
  return record_from_summary(nlohmann::json::parse(in));
}

}  // namespace hmlab
