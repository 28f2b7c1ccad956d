#pragma once

#include <cstdint>
#include <vector>

#include "hmlab/encoder.hpp"
#include "hmlab/pgd.hpp"
#include "json.hpp"

namespace hmlab {

/// Retrieval corpus. When queries_are_gallery is set, query i is gallery row i
/// and is excluded from its own ranking.
struct EvalCorpus {
  Tensor gallery;
  std::vector<int> gallery_labels;
  Tensor queries;
  std::vector<int> query_labels;
  bool queries_are_gallery = false;

  void validate() const;
};

struct RetrievalMetrics {
  double r_at_1 = 0.0;  // percent
  double r_at_2 = 0.0;
  double map = 0.0;
};

RetrievalMetrics retrieval_metrics(const Tensor& query_embeddings, std::span<const int> query_labels,
                                   const Tensor& gallery_embeddings, std::span<const int> gallery_labels,
                                   bool exclude_self);
RetrievalMetrics benign_metrics(const EncoderModel& model, const EvalCorpus& corpus);

struct AttackConfig {
  PerturbationBudget budget{8.0 / 255.0, 1.0 / 255.0, 32, 0.0, 1.0};
  std::size_t candidates_per_class = 5;  // W for CA/QA
  std::uint64_t seed = 0;
};

enum class RankDirection { Plus, Minus };

struct EmbeddingShiftResult {
  double mean_shift = 0.0;  // ES:D
  double recall = 0.0;      // ES:R, R@1 of shifted queries against the clean gallery
};

EmbeddingShiftResult attack_es(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config);
/// Mean rank of the perturbed candidate as a percent of gallery size (0 = top).
double attack_ca(const EncoderModel& model, const EvalCorpus& corpus, RankDirection direction,
                 const AttackConfig& config);
/// Mean rank of the designated candidates in the perturbed queries' rankings, percent.
double attack_qa(const EncoderModel& model, const EvalCorpus& corpus, RankDirection direction,
                 const AttackConfig& config);
/// Mean cosine similarity between perturbed queries and their cross-class partners.
double attack_tma(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config);
/// R@1 after pushing the nearest match away while pulling the nearest non-match in.
double attack_ltm(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config);
/// R@1 after pulling the nearest non-match in.
double attack_gtm(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config);
/// Percent of queries whose clean top-1 stays within the perturbed top-4.
double attack_gtt(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config);

struct RobustnessReport {
  double r_at_1 = 0.0;
  double r_at_2 = 0.0;
  double map = 0.0;
  double ca_plus = 0.0;
  double ca_minus = 0.0;
  double qa_plus = 0.0;
  double qa_minus = 0.0;
  double tma = 0.0;
  double es_d = 0.0;
  double es_r = 0.0;
  double ltm = 0.0;
  double gtm = 0.0;
  double gtt = 0.0;
  double ers = 0.0;
};

/// ERS-style aggregate in [0, 100]: 100 x mean of the ten per-attack scores,
/// each mapped so that 1 means the attack failed completely.
double ers(const RobustnessReport& report);

RobustnessReport evaluate_robustness(const EncoderModel& model, const EvalCorpus& corpus,
                                     const AttackConfig& config);

nlohmann::json to_json(const RobustnessReport& report);
RobustnessReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttackConfig& config);

}  // namespace hmlab
