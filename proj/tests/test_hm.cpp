#include <cmath>
#include <random>

#include "doctest.h"
#include "hmlab/hm.hpp"
#include "hmlab/metric.hpp"
#include "oracles.hpp"

using namespace hmlab;

namespace {

double objective_for(const std::vector<std::vector<double>>& rows_a, const std::vector<std::vector<double>>& rows_p,
                     const std::vector<std::vector<double>>& rows_n, std::vector<double> hd, Tensor* grad_a = nullptr) {
  auto mat = [](const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::matrix(rows.size(), rows[0].size(), flat);
  };
  grad::Tape tape;
  const auto a = tape.leaf(mat(rows_a)), p = tape.leaf(mat(rows_p)), n = tape.leaf(mat(rows_n));
  const auto obj = hm_objective(tape, a, p, n, hd);
  tape.backward(obj);
  if (grad_a) *grad_a = tape.grad(a);
  return tape.value(obj).item();
}

DestinationContext context(std::span<const double> hs, double lbar, std::span<const double> second = {}) {
  return DestinationContext{hs, second, lbar, 0.2};
}

}  // namespace

TEST_CASE("hm objective examples") {
  // H~ = 0.3 - 0.5 = -0.2 against H_D = 0.
  CHECK(objective_for({{0.0, 0.0}}, {{0.3, 0.0}}, {{0.5, 0.0}}, {0.0}) == doctest::Approx(0.04));
  // H~ above H_D is truncated with zero gradient.
  Tensor ga;
  CHECK(objective_for({{0.0, 0.0}}, {{0.5, 0.0}}, {{0.3, 0.0}}, {0.0}, &ga) == 0.0);
  CHECK(ga == Tensor(Shape{1, 2}, 0.0));
  // Residuals 0.1 and 0.3 add as squares.
  CHECK(objective_for({{0.0, 0.0}, {0.0, 0.0}}, {{0.4, 0.0}, {0.2, 0.0}}, {{0.5, 0.0}, {0.5, 0.0}}, {0.0, 0.0}) ==
        doctest::Approx(0.10));
}

TEST_CASE("hm objective rejects a destination of the wrong length") {
  grad::Tape tape;
  const auto a = tape.leaf(Tensor(Shape{2, 2}, 0.1));
  CHECK_THROWS_AS(hm_objective(tape, a, a, a, std::vector<double>{0.0}), ShapeError);
}

TEST_CASE("gradual adversary endpoints and shapes") {
  const std::vector<double> hs = {-0.7, 0.1};
  const auto lga = parse_destination("lga");
  CHECK(destination_value(lga, context(hs, 1.0))[0] == -0.2);
  CHECK(destination_value(lga, context(hs, 0.0))[0] == 0.0);
  double prev = 1.0;
  for (double l = 0.0; l <= 1.0; l += 0.05) {
    const double v = destination_value(lga, context(hs, l))[0];
    CHECK(v <= prev);
    prev = v;
  }
  for (double l : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
    const double sq = destination_value(parse_destination("poly:2"), context(hs, l))[0];
    const double lin = destination_value(parse_destination("poly:1"), context(hs, l))[0];
    const double root = destination_value(parse_destination("poly:0.5"), context(hs, l))[0];
    // x^2 <= x <= sqrt(x) on [0, 1]; the pseudo-hardness negates them.
    CHECK(-sq <= -lin);
    CHECK(-lin <= -root);
    CHECK(lin == destination_value(lga, context(hs, l))[0]);
  }
}

TEST_CASE("gradual boost leaves its base unchanged at normalized loss 1") {
  const std::vector<double> hs = {-0.7, 0.1};
  const auto boosted = parse_destination("gboost:source:0.1");
  CHECK(destination_value(boosted, context(hs, 1.0)) == hs);
  const auto at_zero = destination_value(boosted, context(hs, 0.0));
  CHECK(at_zero[0] == doctest::Approx(-0.6));
  const auto defaulted = parse_destination("gboost:lga", 0.3);
  CHECK(std::get<GradualBoost>(defaulted.kind).xi == 0.3);
}

TEST_CASE("source, sampler and constant destinations") {
  const std::vector<double> hs = {-0.7, 0.1}, second = {-0.1, -0.3};
  CHECK(destination_value(parse_destination("source"), context(hs, 0.5)) == hs);
  CHECK(destination_value(parse_destination("sampler:semihard"), context(hs, 0.5, second)) == second);
  CHECK_THROWS_AS(destination_value(parse_destination("sampler:semihard"), context(hs, 0.5)), std::invalid_argument);
  CHECK(destination_value(parse_destination("const:2"), context(hs, 0.5)) == std::vector<double>{2.0, 2.0});
  // Boosting past the hardness range is clamped.
  CHECK(destination_value(parse_destination("gboost:const:2:0.5"), context(hs, 0.0))[0] == 2.0);
}

TEST_CASE("destination specs round trip and reject junk") {
  for (const char* s : {"source", "lga", "sampler:softhard", "const:-0.1", "poly:2", "gboost:sampler:semihard:0.1",
                        "gboost:lga:0.25"}) {
    CHECK(to_string(parse_destination(s)) == s);
  }
  CHECK(needs_sampler_triplets(parse_destination("gboost:sampler:hardest:0.1")));
  CHECK_FALSE(needs_sampler_triplets(parse_destination("lga")));
  for (const char* s : {"", "foo", "const:3", "const:x", "poly:0", "poly:-1", "sampler:nope"}) {
    CAPTURE(s);
    CHECK_THROWS_AS(parse_destination(s), ConfigError);
  }
}

TEST_CASE("loss tracker normalization") {
  CHECK_THROWS_AS(LossTracker(0.0), ConfigError);
  CHECK_THROWS_AS(LossTracker(-1.0), ConfigError);
  LossTracker t(0.2);
  CHECK(t.normalized() == 1.0);
  t.update(0.05);
  CHECK(t.normalized() == doctest::Approx(0.25));
  t.update(5.0);
  CHECK(t.normalized() == 1.0);
  t.update(0.0);
  CHECK(t.normalized() == 0.0);
}

TEST_CASE("source destination gives zero perturbation") {
  std::mt19937_64 rng(1);
  const EncoderModel model = EncoderModel::initialize({4, {8}, 3, 5});
  std::uniform_real_distribution<double> u(0.1, 0.9);
  Tensor a(Shape{3, 4}), p(Shape{3, 4}), n(Shape{3, 4});
  for (Tensor* t : {&a, &p, &n}) for (double& v : t->storage()) v = u(rng);
  const Tensor ea = model.embed_values(a), ep = model.embed_values(p), en = model.embed_values(n);
  std::vector<double> hs;
  for (std::size_t i = 0; i < 3; ++i) hs.push_back(hardness_value(ea.row(i), ep.row(i), en.row(i)));
  const PerturbationBudget budget{8.0 / 255.0, 1.0 / 255.0, 8, 0.0, 1.0};
  const TripletPerturbation r = hm_perturb(model, a, p, n, hs, budget);
  CHECK(r.anchor == Tensor(a.shape(), 0.0));
  CHECK(r.positive == Tensor(a.shape(), 0.0));
  CHECK(r.negative == Tensor(a.shape(), 0.0));
  CHECK(r.backward_passes == 8);
}

TEST_CASE("hardness manipulation raises hardness toward the destination") {
  std::mt19937_64 rng(2);
  const EncoderModel model = EncoderModel::initialize({4, {8}, 3, 6});
  std::uniform_real_distribution<double> u(0.1, 0.9);
  Tensor a(Shape{4, 4}), p(Shape{4, 4}), n(Shape{4, 4});
  for (Tensor* t : {&a, &p, &n}) for (double& v : t->storage()) v = u(rng);
  const PerturbationBudget budget{8.0 / 255.0, 1.0 / 255.0, 16, 0.0, 1.0};
  const std::vector<double> hd(4, 2.0);
  const TripletPerturbation r = hm_perturb(model, a, p, n, hd, budget);
  auto plus = [](Tensor x, const Tensor& d) {
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] += d[i];
    return x;
  };
  const Tensor ea0 = model.embed_values(a), ep0 = model.embed_values(p), en0 = model.embed_values(n);
  const Tensor ea = model.embed_values(plus(a, r.anchor)), ep = model.embed_values(plus(p, r.positive)),
               en = model.embed_values(plus(n, r.negative));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(hardness_value(ea.row(i), ep.row(i), en.row(i)) > hardness_value(ea0.row(i), ep0.row(i), en0.row(i)));
  }
  CHECK(r.objective_trace.front() > r.objective_trace.back());
}
