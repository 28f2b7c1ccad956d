#include "hmlab/metric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hmlab {

namespace {

void require_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

}  // namespace

double euclidean(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine similarity of a zero vector");
  return dot / std::sqrt(na * nb);
}

double hardness_value(std::span<const double> a, std::span<const double> p, std::span<const double> n) {
  return euclidean(a, p) - euclidean(a, n);
}

double triplet_loss_value(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                          double gamma) {
  return std::max(0.0, hardness_value(a, p, n) + gamma);
}

grad::Node hardness(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n) {
  return grad::sub(tape, grad::euclidean_rowwise(tape, a, p), grad::euclidean_rowwise(tape, a, n));
}

grad::Node triplet_losses(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n, double gamma) {
  return grad::clamp_min(tape, grad::add_scalar(tape, hardness(tape, a, p, n), gamma), 0.0);
}

grad::Node triplet_loss(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n, double gamma) {
  return grad::mean(tape, triplet_losses(tape, a, p, n, gamma));
}

TripletGrads analytic_triplet_grads(std::span<const double> a, std::span<const double> p,
                                    std::span<const double> n) {
  require_same_dim(a, p);
  require_same_dim(a, n);
  const double dap = euclidean(a, p);
  const double dan = euclidean(a, n);
  if (dap == 0.0 || dan == 0.0) throw std::domain_error("triplet gradient undefined for coincident embeddings");
  TripletGrads g{std::vector<double>(a.size()), std::vector<double>(a.size()), std::vector<double>(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    g.anchor[i] = (a[i] - p[i]) / dap - (a[i] - n[i]) / dan;
    g.positive[i] = (p[i] - a[i]) / dap;
    g.negative[i] = (a[i] - n[i]) / dan;
  }
  return g;
}

}  // namespace hmlab
