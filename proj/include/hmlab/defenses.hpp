#pragma once

#include <string>
#include <string_view>

#include "hmlab/encoder.hpp"
#include "hmlab/hm.hpp"
#include "hmlab/pgd.hpp"
#include "hmlab/samplers.hpp"

namespace hmlab {

enum class DefenseKind { None, HM, HMICS, EST, ACT, MinMax };

/// none | hm | hm+ics | est | act | minmax
DefenseKind parse_defense(std::string_view name);
std::string to_string(DefenseKind kind);
bool is_adversarial(DefenseKind kind);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::None;
  Strategy source = Strategy::Softhard;
  DestinationHardness destination{LinearGradual{}};
  double lambda = 0.5;  // ICS weight
  double gamma = 0.2;
  PerturbationBudget budget;

  void validate() const;
};

struct StepDiagnostics {
  double loss = 0.0;               // total training loss
  double triplet_term = 0.0;       // mean triplet loss on the (possibly perturbed) triplets
  double ics_term = 0.0;           // lambda-weighted ICS term, 0 unless HM_ICS
  double benign_loss = 0.0;        // mean triplet loss of the sampled triplets, unperturbed
  double source_hardness = 0.0;    // mean H_S
  double perturbed_hardness = 0.0; // mean hardness after perturbation
  double destination_hardness = 0.0;
  double normalized_loss = 1.0;
  std::size_t backward_passes = 0; // attack passes plus the training pass
  double max_anchor_perturbation = 0.0;
};

struct TripletInputs {
  Tensor anchors;
  Tensor positives;
  Tensor negatives;
};

TripletInputs gather_triplet_inputs(const Tensor& inputs, const TripletBatch& triplets);

/// Perturbations the defense trains on, with the model frozen.
struct DefensePerturbation {
  Tensor anchor;
  Tensor positive;
  Tensor negative;
  std::size_t backward_passes = 0;
  std::vector<double> destination;  // H_D per triplet, HM kinds only
};

/// Runs the defense's inner attack for a sampled triplet batch. The anchor
/// perturbation of ACT is always identically zero.
DefensePerturbation defense_perturbation(const EncoderModel& model, const TripletInputs& triplets,
                                         const Tensor& benign_embeddings, const TripletBatch& source,
                                         std::span<const int> labels, const DefenseSpec& spec,
                                         const LossTracker& tracker, Rng& rng);

struct TrainingLoss {
  grad::Node total;
  grad::Node triplet_term;
  grad::Node ics_term;  // valid only for HM_ICS
  BoundEncoder encoder;
  StepDiagnostics diagnostics;
};

/// Builds the full defense loss for one batch on `tape` with trainable parameters.
TrainingLoss training_loss(grad::Tape& tape, const EncoderModel& model, const LabeledBatch& batch,
                           const DefenseSpec& spec, const LossTracker& tracker, Rng& rng);

/// training_loss + backward + one Adam step. Updates the tracker with the
/// mean triplet term. Throws std::runtime_error on a non-finite loss.
StepDiagnostics training_step(EncoderModel& model, AdamState& adam, const LabeledBatch& batch,
                              const DefenseSpec& spec, LossTracker& tracker, Rng& rng);

struct CollapseReading {
  double similarity = 0.0;
  bool collapsed = false;
};

/// Mean cosine similarity over all unordered pairs of rows. Throws on fewer than 2 rows.
double mean_pairwise_cosine(const Tensor& embeddings);

/// Flags collapse once the similarity exceeds the threshold for `patience` consecutive readings.
class CollapseMonitor {
 public:
  explicit CollapseMonitor(double threshold = 0.99, std::size_t patience = 2)
      : threshold_(threshold), patience_(patience) {}

  CollapseReading observe(const Tensor& embeddings);
  bool collapsed() const { return streak_ >= patience_; }
  const std::vector<double>& history() const { return history_; }

 private:
  double threshold_;
  std::size_t patience_;
  std::size_t streak_ = 0;
  std::vector<double> history_;
};

}  // namespace hmlab
