#pragma once

// Hardness Manipulation: perturb a source triplet (A, P, N) inside the budget
// until its hardness reaches a destination hardness H_D, by PGD on
//   || max(0, H_D - H~_S) ||_2^2
// summed over the mini-batch. H_D comes from a DestinationHardness provider.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hmlab/encoder.hpp"
#include "hmlab/pgd.hpp"
#include "hmlab/samplers.hpp"

namespace hmlab {

struct DestinationHardness;

/// H_D = H_S of the same triplet. HM with this destination is regular training.
struct SourceHardness {};
/// H_D = hardness of a second benign triplet sharing the anchor, drawn by `strategy`.
struct SamplerHardness {
  Strategy strategy = Strategy::Semihard;
};
struct ConstantHardness {
  double value = 0.0;
};
/// base + xi * (1 - normalized previous loss).
struct GradualBoost {
  std::shared_ptr<const DestinationHardness> base;
  double xi = 0.1;
};
/// -gamma * normalized previous loss.
struct LinearGradual {};
/// -gamma * (normalized previous loss)^exponent.
struct PolyGradual {
  double exponent = 2.0;
};

struct DestinationHardness {
  std::variant<SourceHardness, SamplerHardness, ConstantHardness, GradualBoost, LinearGradual, PolyGradual> kind;
};

/// Parses "source", "sampler:<strategy>", "const:<c>", "gboost:<base spec>:<xi>",
/// "lga", "poly:<exponent>". A gboost spec without a numeric suffix uses default_xi.
/// Throws ConfigError on anything else.
DestinationHardness parse_destination(std::string_view spec, double default_xi = 0.1);
std::string to_string(const DestinationHardness& destination);

/// True when the provider needs a second benign triplet per anchor.
bool needs_sampler_triplets(const DestinationHardness& destination);
std::optional<Strategy> sampler_strategy(const DestinationHardness& destination);

/// Tracks the previous step's loss and normalizes it as min(u, loss) / u.
class LossTracker {
 public:
  /// Starts at loss = u so the first normalized value is 1 (weakest gradual adversary).
  explicit LossTracker(double u);

  void update(double loss);
  double previous() const { return previous_; }
  double normalized() const;
  double u() const { return u_; }

 private:
  double u_;
  double previous_;
};

struct DestinationContext {
  std::span<const double> source_hardness;   // benign H_S per triplet
  std::span<const double> sampler_hardness;  // benign H of the second triplet; may be empty
  double normalized_loss = 1.0;              // in [0, 1]
  double gamma = 0.2;
};

/// H_D per triplet, clamped to [-2, 2].
std::vector<double> destination_value(const DestinationHardness& destination, const DestinationContext& context);

/// sum_t max(0, H_D[t] - H~_S[t])^2 for [T x D] embedding nodes; H_D is a constant.
grad::Node hm_objective(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n,
                        std::span<const double> destination);

struct TripletPerturbation {
  Tensor anchor;
  Tensor positive;
  Tensor negative;
  std::size_t backward_passes = 0;
  std::vector<double> objective_trace;
};

/// PGD minimization of hm_objective over (r_a, r_p, r_n) with the model frozen.
/// anchors/positives/negatives are [T x n] input rows of the source triplets.
TripletPerturbation hm_perturb(const EncoderModel& model, const Tensor& anchors, const Tensor& positives,
                               const Tensor& negatives, std::span<const double> destination,
                               const PerturbationBudget& budget, const PgdOptions& options = {});

}  // namespace hmlab
