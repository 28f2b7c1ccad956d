#pragma once
// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hmlab/gradcore.hpp"
#include "hmlab/tensor.hpp"

namespace oracle {

using hmlab::Tensor;
using hmlab::grad::Node;
using hmlab::grad::Tape;
using Build = std::function<Node(Tape&, Node)>;

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(hmlab::Shape{rows, cols});
  for (double& v : t.storage()) v = n(rng);
  return t;
}

inline double evaluate(const Build& build, const Tensor& x) {
  Tape tape;
  return tape.value(build(tape, tape.constant(x))).item();
}

inline Tensor autodiff_gradient(const Build& build, const Tensor& x) {
  Tape tape;
  const Node leaf = tape.leaf(x);
  tape.backward(build(tape, leaf));
  return tape.grad(leaf);
}

inline Tensor central_difference(const Build& build, const Tensor& x, double h = 1e-5) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor plus = x, minus = x;
    plus[i] += h;
    minus[i] -= h;
    g[i] = (evaluate(build, plus) - evaluate(build, minus)) / (2.0 * h);
  }
  return g;
}

/// max_i |g_i - fd_i| / max(|g_i|, |fd_i|, floor). The floor keeps entries whose
/// true value is ~0 from turning rounding noise into a large ratio.
inline double max_relative_fd_error(const Build& build, const Tensor& x, double h = 1e-5, double floor = 1e-3) {
  const Tensor g = autodiff_gradient(build, x);
  const Tensor fd = central_difference(build, x, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double denom = std::max({std::abs(g[i]), std::abs(fd[i]), floor});
    worst = std::max(worst, std::abs(g[i] - fd[i]) / denom);
  }
  return worst;
}

/// Random graph over a [rows x cols] input mixing every differentiable op.
/// Matrices used by the graph are drawn once so the graph is a fixed function.
inline Build random_composite_graph(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  struct Step {
    int op;
    std::size_t lhs, rhs;
    double c;
    Tensor m;
    std::vector<std::size_t> perm;
  };
  std::uniform_int_distribution<int> pick_op(0, 10);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int depth = std::uniform_int_distribution<int>(3, 8)(rng);
  std::vector<Step> steps;
  for (int s = 0; s < depth; ++s) {
    const std::size_t have = static_cast<std::size_t>(s) + 1;
    std::uniform_int_distribution<std::size_t> pick_node(0, have - 1);
    Step st{pick_op(rng), pick_node(rng), pick_node(rng), unit(rng), {}, {}};
    if (st.op == 6) st.m = random_matrix(cols, cols, rng, 1.0 / std::sqrt(static_cast<double>(cols)));
    if (st.op == 7) st.m = random_matrix(1, cols, rng, 0.3), st.m = Tensor::vector(st.m.storage());
    if (st.op == 9) {
      st.perm.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) st.perm[r] = std::uniform_int_distribution<std::size_t>(0, rows - 1)(rng);
    }
    steps.push_back(std::move(st));
  }
  const int head = std::uniform_int_distribution<int>(0, 2)(rng);
  return [steps, head](Tape& tape, Node x) {
    using namespace hmlab::grad;
    std::vector<Node> nodes{x};
    for (const Step& st : steps) {
      const Node a = nodes[st.lhs], b = nodes[st.rhs];
      switch (st.op) {
        case 0: nodes.push_back(add(tape, a, b)); break;
        case 1: nodes.push_back(sub(tape, a, scale(tape, b, 0.5))); break;
        case 2: nodes.push_back(scale(tape, square(tape, a), 0.5)); break;
        case 3: nodes.push_back(relu(tape, add_scalar(tape, a, st.c))); break;
        case 4: nodes.push_back(clamp_min(tape, a, st.c)); break;
        case 5: nodes.push_back(scale(tape, a, st.c)); break;
        case 6: nodes.push_back(matmul(tape, a, tape.constant(st.m))); break;
        case 7: nodes.push_back(add_bias(tape, a, tape.constant(st.m))); break;
        case 8: nodes.push_back(l2_normalize_rows(tape, add_scalar(tape, a, 3.0))); break;
        case 9: nodes.push_back(gather_rows(tape, a, st.perm)); break;
        default: nodes.push_back(add(tape, a, scale(tape, b, st.c))); break;
      }
    }
    const Node last = nodes.back();
    const Node first = nodes[nodes.size() / 2];
    switch (head) {
      case 0: return sum(tape, square(tape, last));
      case 1: return add(tape, mean(tape, last), sum(tape, euclidean_rowwise(tape, last, add_scalar(tape, first, 0.7))));
      default: return sum(tape, cosine_rowwise(tape, add_scalar(tape, last, 2.0), add_scalar(tape, first, -2.0)));
    }
  };
}

}  // namespace oracle
