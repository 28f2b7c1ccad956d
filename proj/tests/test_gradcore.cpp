#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "hmlab/gradcore.hpp"
#include "oracles.hpp"

using namespace hmlab;
using namespace hmlab::grad;

TEST_CASE("clamp_min zeroes negatives and masks their gradient") {
  Tape tape;
  const Node x = tape.leaf(Tensor::vector({-1.0, 2.0}));
  const Node y = clamp_min(tape, x, 0.0);
  CHECK(tape.value(y).storage() == std::vector<double>{0.0, 2.0});
  tape.backward(sum(tape, y));
  CHECK(tape.grad(x).storage() == std::vector<double>{0.0, 1.0});
}

TEST_CASE("clamp_min passes no gradient at the kink") {
  Tape tape;
  const Node x = tape.leaf(Tensor::vector({0.0}));
  tape.backward(sum(tape, clamp_min(tape, x, 0.0)));
  CHECK(tape.grad(x)[0] == 0.0);
}

TEST_CASE("l2_normalize_rows of a 3-4-5 row") {
  Tape tape;
  const Node x = tape.leaf(Tensor::matrix({{3.0, 4.0}}));
  const Tensor& y = tape.value(l2_normalize_rows(tape, x));
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("l2_normalize_rows rejects a zero row") {
  Tape tape;
  const Node x = tape.leaf(Tensor::matrix({{1.0, 0.0}, {0.0, 0.0}}));
  CHECK_THROWS_AS(l2_normalize_rows(tape, x), std::domain_error);
}

TEST_CASE("antipodal unit vectors are distance 2 apart") {
  Tape tape;
  const Node u = tape.leaf(Tensor::matrix({{0.6, 0.8}}));
  const Node v = tape.leaf(Tensor::matrix({{-0.6, -0.8}}));
  CHECK(tape.value(euclidean_rowwise(tape, u, v))[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("shape mismatches name both shapes") {
  Tape tape;
  const Node a = tape.leaf(Tensor(Shape{2, 3}));
  const Node b = tape.leaf(Tensor(Shape{3, 2}));
  try {
    add(tape, a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(tape, a, a), ShapeError);
  CHECK_THROWS_AS(euclidean_rowwise(tape, a, b), ShapeError);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  const Node x = tape.leaf(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(square(tape, x)), ShapeError);
}

TEST_CASE("grad of sum of squares is 2x") {
  Tape tape;
  const Node x = tape.leaf(Tensor::vector({1.0, 2.0}));
  tape.backward(sum(tape, square(tape, x)));
  CHECK(tape.grad(x).storage() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("grad of squared euclidean distance") {
  Tape tape;
  const Node a = tape.leaf(Tensor::matrix({{1.0, 0.0}}));
  const Node b = tape.leaf(Tensor::matrix({{0.0, 0.0}}));
  tape.backward(sum(tape, square(tape, euclidean_rowwise(tape, a, b))));
  CHECK(tape.grad(a)[0] == doctest::Approx(2.0));
  CHECK(tape.grad(a)[1] == doctest::Approx(0.0));
  CHECK(tape.grad(b)[0] == doctest::Approx(-2.0));
}

TEST_CASE("euclidean gradient is zero for coincident rows") {
  Tape tape;
  const Node a = tape.leaf(Tensor::matrix({{0.3, 0.4}}));
  const Node b = tape.leaf(Tensor::matrix({{0.3, 0.4}}));
  tape.backward(sum(tape, euclidean_rowwise(tape, a, b)));
  CHECK(tape.grad(a).storage() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("constants receive no gradient and grad before backward throws") {
  Tape tape;
  const Node c = tape.constant(Tensor::vector({1.0, 2.0}));
  const Node x = tape.leaf(Tensor::vector({3.0, 4.0}));
  CHECK_THROWS_AS(tape.grad(x), std::logic_error);
  tape.backward(sum(tape, add(tape, square(tape, c), x)));
  CHECK(tape.grad(x).storage() == std::vector<double>{1.0, 1.0});
  CHECK_FALSE(tape.requires_grad(c));
  CHECK(tape.backward_count() == 1);
}

TEST_CASE("gather_rows scatters gradient back, accumulating repeats") {
  Tape tape;
  const Node x = tape.leaf(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
  const Node g = gather_rows(tape, x, {1, 1, 0});
  tape.backward(sum(tape, g));
  CHECK(tape.grad(x).storage() == std::vector<double>{1.0, 1.0, 2.0, 2.0});
}

TEST_CASE("cosine of orthogonal and parallel rows") {
  Tape tape;
  const Node a = tape.leaf(Tensor::matrix({{1.0, 0.0}, {2.0, 2.0}}));
  const Node b = tape.leaf(Tensor::matrix({{0.0, 3.0}, {1.0, 1.0}}));
  const Tensor& c = tape.value(cosine_rowwise(tape, a, b));
  CHECK(c[0] == doctest::Approx(0.0));
  CHECK(c[1] == doctest::Approx(1.0));
}

TEST_CASE("euclidean distance between unit rows lies in [0, 2]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Tape tape;
    const Node a = l2_normalize_rows(tape, tape.leaf(oracle::random_matrix(4, 5, rng)));
    const Node b = l2_normalize_rows(tape, tape.leaf(oracle::random_matrix(4, 5, rng)));
    for (double d : tape.value(euclidean_rowwise(tape, a, b)).storage()) {
      CHECK(d >= 0.0);
      CHECK(d <= 2.0 + 1e-12);
    }
  }
}

TEST_CASE("every op matches central finite differences") {
  std::mt19937_64 rng(11);
  using Build = std::function<Node(Tape&, Node)>;
  const Tensor w = oracle::random_matrix(3, 4, rng);
  const Tensor bias = Tensor::vector({0.1, -0.2, 0.3, 0.05});
  const Tensor other = oracle::random_matrix(2, 3, rng);
  const std::vector<std::pair<const char*, Build>> cases = {
      {"matmul", [&](Tape& t, Node x) { return sum(t, square(t, matmul(t, x, t.constant(w)))); }},
      {"add_bias relu", [&](Tape& t, Node x) {
         return sum(t, relu(t, add_bias(t, matmul(t, x, t.constant(w)), t.constant(bias))));
       }},
      {"sub mean", [&](Tape& t, Node x) { return mean(t, square(t, sub(t, x, t.constant(other)))); }},
      {"normalize", [&](Tape& t, Node x) {
         return sum(t, matmul(t, l2_normalize_rows(t, x), t.constant(w)));
       }},
      {"euclidean", [&](Tape& t, Node x) { return sum(t, euclidean_rowwise(t, x, t.constant(other))); }},
      {"cosine", [&](Tape& t, Node x) { return sum(t, cosine_rowwise(t, x, t.constant(other))); }},
      {"scale add_scalar clamp", [&](Tape& t, Node x) {
         return sum(t, clamp_min(t, add_scalar(t, scale(t, x, 3.0), -0.1), 0.0));
       }},
      {"gather", [&](Tape& t, Node x) { return sum(t, square(t, gather_rows(t, x, {1, 0, 1}))); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    const Tensor x0 = oracle::random_matrix(2, 3, rng);
    CHECK(oracle::max_relative_fd_error(build, x0) < 1e-6);
  }
}
