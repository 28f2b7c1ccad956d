#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "hmlab/metric.hpp"
#include "hmlab/samplers.hpp"
#include "oracles.hpp"

using namespace hmlab;

TEST_CASE("strategy names round trip") {
  for (Strategy s : {Strategy::Random, Strategy::Semihard, Strategy::Softhard, Strategy::Distance, Strategy::Hardest}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("hardish"), ConfigError);
}

TEST_CASE("Hardest picks the nearest negative") {
  // Anchor 0 at the origin, positive 1; negatives 2 and 3 at distances 0.3 and 0.9.
  const Tensor e = Tensor::matrix({{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.3}, {0.0, -0.9}});
  const std::vector<int> labels = {0, 0, 1, 1};
  Rng rng(1);
  const TripletBatch t = sample_triplets(labels, e, Strategy::Hardest, 0.2, rng);
  CHECK(t.triples[0] == Triplet{0, 1, 2});
}

TEST_CASE("Semihard picks the negative inside (d_ap, d_ap + margin)") {
  const Tensor e = Tensor::matrix({{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.45}, {0.0, -0.6}, {-0.9, 0.0}});
  const std::vector<int> labels = {0, 0, 1, 1, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const TripletBatch t = sample_triplets(labels, e, Strategy::Semihard, 0.2, rng);
    CHECK(t.triples[0] == Triplet{0, 1, 3});
  }
}

TEST_CASE("every strategy returns valid triplets, one per anchor") {
  std::mt19937_64 g(4);
  const Tensor e = oracle::random_matrix(16, 5, g);
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), 4, c);
  for (Strategy s : {Strategy::Random, Strategy::Semihard, Strategy::Softhard, Strategy::Distance, Strategy::Hardest}) {
    Rng rng(2);
    const TripletBatch t = sample_triplets(labels, e, s, 0.2, rng);
    REQUIRE(t.triples.size() == labels.size());
    for (std::size_t i = 0; i < t.triples.size(); ++i) {
      const Triplet& tr = t.triples[i];
      CHECK(tr.anchor == i);
      CHECK(tr.positive != tr.anchor);
      CHECK(labels[tr.positive] == labels[tr.anchor]);
      CHECK(labels[tr.negative] != labels[tr.anchor]);
    }
  }
}

TEST_CASE("Hardest hardness dominates Random on average") {
  std::mt19937_64 g(8);
  const Tensor e = oracle::random_matrix(32, 4, g);
  std::vector<int> labels;
  for (int c = 0; c < 8; ++c) labels.insert(labels.end(), 4, c);
  Rng r1(3), r2(3);
  const double hard = hardness_stats(sample_triplets(labels, e, Strategy::Hardest, 0.2, r1), e).mean;
  const double rand = hardness_stats(sample_triplets(labels, e, Strategy::Random, 0.2, r2), e).mean;
  CHECK(hard > rand);
}

TEST_CASE("hardness statistics") {
  const Tensor e = Tensor::matrix({{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}, {3.0, 3.0}});
  SUBCASE("single triplet has zero variance") {
    const TripletBatch t{{Triplet{0, 1, 2}}, Strategy::Random};
    const HardnessStats s = hardness_stats(t, e);
    CHECK(s.mean == doctest::Approx(1.0 - 2.0));
    CHECK(s.variance == 0.0);
  }
  SUBCASE("identical geometry has zero variance") {
    const TripletBatch t{{Triplet{0, 1, 2}, Triplet{0, 1, 2}, Triplet{0, 1, 2}}, Strategy::Random};
    CHECK(hardness_stats(t, e).variance == 0.0);
  }
  SUBCASE("population variance") {
    const TripletBatch t{{Triplet{0, 1, 2}, Triplet{0, 2, 1}}, Strategy::Random};
    CHECK(hardness_stats(t, e).variance == doctest::Approx(1.0));
  }
  SUBCASE("empty set is an error") {
    CHECK_THROWS_AS(hardness_stats(TripletBatch{}, e), std::invalid_argument);
  }
}

TEST_CASE("batch validation") {
  LabeledBatch b{Tensor(Shape{3, 2}), {0, 0, 1}};
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = LabeledBatch{Tensor(Shape{4, 2}), {0, 0, 0, 0}};
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = LabeledBatch{Tensor(Shape{4, 2}), {0, 0, 1, 1}};
  CHECK_NOTHROW(b.validate());
}

TEST_CASE("distance weight is finite, capped and clipped") {
  for (double d : {0.0, 0.1, 0.5, 1.0, 1.4, 1.9, 1.999}) {
    const double w = distance_weight(d, 32);
    CHECK(std::isfinite(w));
    CHECK(w > 0.0);
    CHECK(w <= 100.0);
  }
  CHECK(distance_weight(0.1, 32) == distance_weight(0.5, 32));
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  std::mt19937_64 g(12);
  const Tensor e = oracle::random_matrix(12, 3, g);
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
  for (Strategy s : {Strategy::Random, Strategy::Softhard, Strategy::Distance}) {
    Rng a(77), b(77);
    CHECK(sample_triplets(labels, e, s, 0.2, a).triples == sample_triplets(labels, e, s, 0.2, b).triples);
  }
}
