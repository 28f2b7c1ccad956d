#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "hmlab/pgd.hpp"

using namespace hmlab;
using namespace hmlab::grad;

namespace {
const PerturbationBudget kBudget{8.0 / 255.0, 1.0 / 255.0, 8, 0.0, 1.0};
}

TEST_CASE("zero gradient everywhere leaves the perturbation at zero") {
  const Objective flat = [](Tape& t, Node x) { return sum(t, scale(t, x, 0.0)); };
  const PgdResult r = pgd_maximize(flat, Tensor::matrix({{0.5, 0.5}}), kBudget);
  CHECK(r.perturbation == Tensor(Shape{1, 2}, 0.0));
  CHECK(r.backward_passes == kBudget.steps);
  CHECK_FALSE(r.active[0]);
}

TEST_CASE("linear objective climbs to the box edge") {
  const Objective identity = [](Tape& t, Node x) { return sum(t, x); };
  const PgdResult up = pgd_maximize(identity, Tensor::matrix({{0.5}}), kBudget);
  CHECK(up.perturbation[0] == doctest::Approx(8.0 / 255.0).epsilon(1e-12));
  const PgdResult down = pgd_minimize(identity, Tensor::matrix({{0.5}}), kBudget);
  CHECK(down.perturbation[0] == doctest::Approx(-8.0 / 255.0).epsilon(1e-12));
  CHECK(up.objective_trace.size() == kBudget.steps);
  for (std::size_t i = 1; i < up.objective_trace.size(); ++i) CHECK(up.objective_trace[i] > up.objective_trace[i - 1]);
}

TEST_CASE("projection examples") {
  const Tensor mid = Tensor::matrix({{0.5}});
  CHECK(project(Tensor::matrix({{0.05}}), mid, kBudget)[0] == doctest::Approx(8.0 / 255.0));
  CHECK(project(Tensor::matrix({{-0.05}}), mid, kBudget)[0] == doctest::Approx(-8.0 / 255.0));
  const Tensor edge = Tensor::matrix({{0.99}});
  const Tensor clipped = project(Tensor::matrix({{0.03}}), edge, kBudget);
  CHECK(0.99 + clipped[0] <= 1.0);
  CHECK(clipped[0] == doctest::Approx(0.01));
  const Tensor feasible = Tensor::matrix({{0.01, -0.02}});
  CHECK(project(feasible, Tensor::matrix({{0.5, 0.5}}), kBudget) == feasible);
}

TEST_CASE("projection is idempotent and always feasible") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> x(0.0, 1.0), r(-0.1, 0.1);
  for (int trial = 0; trial < 500; ++trial) {
    Tensor xs(Shape{1, 8}), rs(Shape{1, 8});
    for (double& v : xs.storage()) v = x(rng);
    for (double& v : rs.storage()) v = r(rng);
    const Tensor p = project(rs, xs, kBudget);
    CHECK(is_feasible(p, xs, kBudget));
    CHECK(project(p, xs, kBudget) == p);
  }
}

TEST_CASE("budget validation") {
  CHECK_THROWS_AS((PerturbationBudget{0.0, 0.0, 8, 0, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((PerturbationBudget{0.01, 0.02, 8, 0, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((PerturbationBudget{0.03, 0.01, 0, 0, 1}.validate()), ConfigError);
  CHECK_NOTHROW(kBudget.validate());
}

TEST_CASE("zero-gradient rows freeze while others keep moving") {
  const Objective obj = [](Tape& t, Node x) { return sum(t, square(t, add_scalar(t, x, -0.5))); };
  const PgdResult r = pgd_maximize(obj, Tensor::matrix({{0.2}, {0.5}}), kBudget);
  CHECK(r.perturbation[0] == doctest::Approx(-8.0 / 255.0));
  CHECK(r.perturbation[1] == 0.0);
  CHECK(r.active[0]);
  CHECK_FALSE(r.active[1]);
}

TEST_CASE("non-finite gradients stop the affected row") {
  const double inf = std::numeric_limits<double>::infinity();
  const Objective obj = [inf](Tape& t, Node x) {
    return sum(t, euclidean_rowwise(t, x, t.constant(Tensor::matrix({{0.0}, {inf}}))));
  };
  const PgdResult r = pgd_maximize(obj, Tensor::matrix({{0.2}, {0.5}}), kBudget);
  CHECK(r.perturbation[0] == doctest::Approx(8.0 / 255.0));
  CHECK(r.perturbation[1] == 0.0);
  CHECK_FALSE(r.active[1]);
  CHECK(r.backward_passes == kBudget.steps);
}

TEST_CASE("initial perturbation and step callback") {
  const Objective identity = [](Tape& t, Node x) { return sum(t, x); };
  PgdOptions options;
  options.initial = Tensor::matrix({{0.5}});  // projected down to epsilon
  std::size_t calls = 0;
  options.on_step = [&](std::size_t, const Tensor& r) {
    ++calls;
    CHECK(std::abs(r[0]) <= kBudget.epsilon);
  };
  const PgdResult res = pgd_minimize(identity, Tensor::matrix({{0.5}}), kBudget, options);
  CHECK(calls == kBudget.steps);
  CHECK(res.perturbation[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}
