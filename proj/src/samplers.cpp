#include "hmlab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hmlab/metric.hpp"

namespace hmlab {

Strategy parse_strategy(std::string_view name) {
  if (name == "random") return Strategy::Random;
  if (name == "semihard") return Strategy::Semihard;
  if (name == "softhard") return Strategy::Softhard;
  if (name == "distance") return Strategy::Distance;
  if (name == "hardest") return Strategy::Hardest;
  throw ConfigError("unknown sampling strategy '" + std::string(name) +
                    "' (expected random|semihard|softhard|distance|hardest)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Random:
      return "random";
    case Strategy::Semihard:
      return "semihard";
    case Strategy::Softhard:
      return "softhard";
    case Strategy::Distance:
      return "distance";
    case Strategy::Hardest:
      return "hardest";
  }
  return "unknown";
}

void LabeledBatch::validate() const {
  if (inputs.rows() != labels.size()) {
    throw ConfigError("batch has " + std::to_string(inputs.rows()) + " rows but " + std::to_string(labels.size()) +
                      " labels");
  }
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw ConfigError("batch needs at least two classes to form negatives");
  for (auto [label, count] : counts) {
    if (count < 2) throw ConfigError("class " + std::to_string(label) + " has fewer than 2 samples in the batch");
  }
}

double distance_weight(double distance, std::size_t dim) {
  constexpr double kCap = 100.0;
  constexpr double kMinDistance = 0.5;
  const double d = std::max(distance, kMinDistance);
  const double dimf = static_cast<double>(dim);
  const double inner = 1.0 - d * d / 4.0;
  if (inner <= 0.0) return kCap;
  const double log_q = (dimf - 2.0) * std::log(d) + (dimf - 3.0) / 2.0 * std::log(inner);
  if (-log_q >= std::log(kCap)) return kCap;
  return std::exp(-log_q);
}

namespace {

std::size_t uniform_pick(std::span<const std::size_t> pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  return pool[dist(rng)];
}

}  // namespace

TripletBatch sample_triplets(std::span<const int> labels, const Tensor& embeddings, Strategy strategy, double gamma,
                             Rng& rng) {
  const std::size_t b = labels.size();
  if (embeddings.rows() != b) {
    throw ShapeError("sample_triplets: " + std::to_string(b) + " labels vs embeddings " +
                     to_string(embeddings.shape()));
  }
  std::vector<double> dist(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      dist[i * b + j] = dist[j * b + i] = euclidean(embeddings.row(i), embeddings.row(j));
    }
  }

  TripletBatch out;
  out.strategy = strategy;
  out.triples.reserve(b);
  std::vector<std::size_t> positives, negatives, pool;
  for (std::size_t a = 0; a < b; ++a) {
    positives.clear();
    negatives.clear();
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? positives : negatives).push_back(j);
    }
    if (positives.empty() || negatives.empty()) {
      throw std::invalid_argument("anchor " + std::to_string(a) + " has no positive or no negative in the batch");
    }
    const double* da = &dist[a * b];
    auto by_distance = [da](std::size_t x, std::size_t y) { return da[x] < da[y] || (da[x] == da[y] && x < y); };

    std::size_t p = 0, n = 0;
    switch (strategy) {
      case Strategy::Random:
        p = uniform_pick(positives, rng);
        n = uniform_pick(negatives, rng);
        break;
      case Strategy::Semihard: {
        p = uniform_pick(positives, rng);
        const double dap = da[p];
        pool.clear();
        for (std::size_t j : negatives) {
          const double h = dap - da[j];
          if (h < 0.0 && h > -gamma) pool.push_back(j);
        }
        if (!pool.empty()) {
          n = uniform_pick(pool, rng);
          break;
        }
        pool.clear();
        for (std::size_t j : negatives) {
          if (da[j] >= dap + gamma) pool.push_back(j);
        }
        if (!pool.empty()) {
          n = *std::min_element(pool.begin(), pool.end(), by_distance);
        } else {
          n = uniform_pick(negatives, rng);
        }
        break;
      }
      case Strategy::Softhard: {
        std::sort(positives.begin(), positives.end(), by_distance);
        std::sort(negatives.begin(), negatives.end(), by_distance);
        const std::size_t far_count = (positives.size() + 1) / 2;
        const std::size_t near_count = (negatives.size() + 1) / 2;
        p = uniform_pick(std::span(positives).last(far_count), rng);
        n = uniform_pick(std::span(negatives).first(near_count), rng);
        break;
      }
      case Strategy::Distance: {
        p = uniform_pick(positives, rng);
        std::vector<double> weights;
        weights.reserve(negatives.size());
        for (std::size_t j : negatives) weights.push_back(distance_weight(da[j], embeddings.cols()));
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        n = negatives[pick(rng)];
        break;
      }
      case Strategy::Hardest:
        p = uniform_pick(positives, rng);
        n = *std::min_element(negatives.begin(), negatives.end(), by_distance);
        break;
    }
    out.triples.push_back({a, p, n});
  }
  return out;
}

std::vector<double> triplet_hardness(const TripletBatch& triplets, const Tensor& embeddings) {
  std::vector<double> h;
  h.reserve(triplets.triples.size());
  for (const auto& t : triplets.triples) {
    h.push_back(hardness_value(embeddings.row(t.anchor), embeddings.row(t.positive), embeddings.row(t.negative)));
  }
  return h;
}

HardnessStats hardness_stats(const TripletBatch& triplets, const Tensor& embeddings) {
  if (triplets.triples.empty()) throw std::invalid_argument("hardness_stats of an empty triplet set");
  // Welford: identical inputs give exactly zero variance.
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double v : triplet_hardness(triplets, embeddings)) {
    ++k;
    const double delta = v - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (v - mean);
  }
  return {mean, m2 / static_cast<double>(k)};
}

}  // namespace hmlab
