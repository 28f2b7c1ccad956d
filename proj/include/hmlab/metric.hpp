#pragma once

#include <span>
#include <vector>

#include "hmlab/gradcore.hpp"

namespace hmlab {

struct MarginConfig {
  double gamma = 0.2;

  void validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("margin gamma must be >= 0");
  }
};

double euclidean(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// d(a,p) - d(a,n) for a single triplet of embeddings.
double hardness_value(std::span<const double> a, std::span<const double> p, std::span<const double> n);
/// max(0, d(a,p) - d(a,n) + gamma).
double triplet_loss_value(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                          double gamma);

// Tape versions. a, p, n are [T x D] embedding nodes (one triplet per row).

/// Per-row hardness -> [T].
grad::Node hardness(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n);
/// Per-row triplet loss -> [T].
grad::Node triplet_losses(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n, double gamma);
/// Mean triplet loss over rows -> scalar.
grad::Node triplet_loss(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n, double gamma);

struct TripletGrads {
  std::vector<double> anchor;
  std::vector<double> positive;
  std::vector<double> negative;
};

/// Closed-form gradients of the triplet loss w.r.t. the three embeddings, valid
/// where the loss is positive. Throws std::domain_error if a coincides with p or n.
TripletGrads analytic_triplet_grads(std::span<const double> a, std::span<const double> p,
                                    std::span<const double> n);

}  // namespace hmlab
