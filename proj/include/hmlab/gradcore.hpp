#pragma once

// Reverse-mode automatic differentiation over dense 2-D tensors.
//
// A Tape records every operation in execution order, so parents of node i
// always have indices below i and backward() is a single reverse sweep.
// Tapes are single-owner; build a fresh one for each forward pass.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hmlab/tensor.hpp"

namespace hmlab::grad {

/// Handle to a value recorded on a Tape.
struct Node {
  std::size_t index = 0;
};

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  AddBias,
  Sub,
  Relu,
  ClampMin,
  Square,
  Sum,
  Scale,
  AddScalar,
  NormalizeRows,
  EuclideanRows,
  CosineRows,
  GatherRows,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Records an input. Constants (requires_grad = false) never receive propagated gradient.
  Node leaf(Tensor value, bool requires_grad = true);
  Node constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Node n) const { return entries_.at(n.index).value; }
  bool requires_grad(Node n) const { return entries_.at(n.index).requires_grad; }

  /// Gradient of the last backward root with respect to n. Zeros if n was unreachable.
  const Tensor& grad(Node n) const;

  /// Accumulates d(root)/d(node) into every node with index <= root.
  /// Throws ShapeError when root is not scalar-shaped.
  void backward(Node root);

  std::size_t size() const { return entries_.size(); }
  std::size_t backward_count() const { return backward_count_; }

  // Used by the op implementations; not part of the stable surface.
  Node record(Op op, Tensor value, std::initializer_list<Node> parents, double scalar = 0.0,
              std::vector<std::size_t> indices = {}, Tensor aux = {});

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    Op op = Op::Leaf;
    std::size_t parents[2] = {0, 0};
    std::uint8_t parent_count = 0;
    bool requires_grad = false;
    double scalar = 0.0;
    std::vector<std::size_t> indices;
    Tensor aux;
  };

  void propagate(std::size_t i);
  Tensor& grad_slot(std::size_t i);

  std::vector<Entry> entries_;
  std::size_t backward_count_ = 0;
};

// [m x k] * [k x n] -> [m x n]
Node matmul(Tape& tape, Node a, Node b);
// Elementwise, identical shapes.
Node add(Tape& tape, Node a, Node b);
Node sub(Tape& tape, Node a, Node b);
// [m x n] + [n] broadcast over rows.
Node add_bias(Tape& tape, Node a, Node bias);
Node relu(Tape& tape, Node a);
/// max(c, x) elementwise. Gradient is 0 wherever x <= c, including the kink.
Node clamp_min(Tape& tape, Node a, double c);
Node square(Tape& tape, Node a);
Node sum(Tape& tape, Node a);
Node mean(Tape& tape, Node a);
Node scale(Tape& tape, Node a, double c);
Node add_scalar(Tape& tape, Node a, double c);
/// Row-wise x / ||x||. Throws on a zero-norm row.
Node l2_normalize_rows(Tape& tape, Node a);
/// Row-wise ||a_i - b_i|| -> [m]. Gradient at zero distance is defined as 0.
Node euclidean_rowwise(Tape& tape, Node a, Node b);
/// Row-wise cosine similarity -> [m]. Throws on a zero-norm row.
Node cosine_rowwise(Tape& tape, Node a, Node b);
/// Selects rows by index (repeats allowed); backward scatter-adds.
Node gather_rows(Tape& tape, Node a, std::vector<std::size_t> indices);

}  // namespace hmlab::grad
