#pragma once

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hmlab/tensor.hpp"

namespace hmlab {

using Rng = std::mt19937_64;

enum class Strategy { Random, Semihard, Softhard, Distance, Hardest };

Strategy parse_strategy(std::string_view name);
std::string to_string(Strategy s);

/// P classes x K samples. Every class present has at least two rows.
struct LabeledBatch {
  Tensor inputs;            // [B x n]
  std::vector<int> labels;  // B entries

  /// Throws ConfigError if a class has fewer than two samples or sizes disagree.
  void validate() const;
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletBatch {
  std::vector<Triplet> triples;
  Strategy strategy = Strategy::Random;
};

/// One triplet per batch row (each row is the anchor exactly once), chosen by
/// the strategy's rule over pairwise embedding distances. Every strategy is
/// total: fallbacks guarantee a triple for every anchor.
TripletBatch sample_triplets(std::span<const int> labels, const Tensor& embeddings, Strategy strategy, double gamma,
                             Rng& rng);

/// Per-triplet hardness d(a,p) - d(a,n) from row embeddings.
std::vector<double> triplet_hardness(const TripletBatch& triplets, const Tensor& embeddings);

struct HardnessStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

/// Throws std::invalid_argument on an empty triplet set.
HardnessStats hardness_stats(const TripletBatch& triplets, const Tensor& embeddings);

/// Relative sampling weights of the distance-weighted sampler at embedding
/// dimension `dim`: min(cap, 1/q(d)), d clipped below at 0.5, cap = 100.
double distance_weight(double distance, std::size_t dim);

}  // namespace hmlab
