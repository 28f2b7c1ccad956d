#include "hmlab/gradcore.hpp"

#include <cmath>
#include <string>

namespace hmlab::grad {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
}

double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Node Tape::leaf(Tensor value, bool requires_grad) {
  Entry e;
  e.value = std::move(value);
  e.requires_grad = requires_grad;
  entries_.push_back(std::move(e));
  return Node{entries_.size() - 1};
}

Node Tape::record(Op op, Tensor value, std::initializer_list<Node> parents, double scalar,
                  std::vector<std::size_t> indices, Tensor aux) {
  Entry e;
  e.value = std::move(value);
  e.op = op;
  e.scalar = scalar;
  e.indices = std::move(indices);
  e.aux = std::move(aux);
  for (Node p : parents) {
    if (p.index >= entries_.size()) throw std::out_of_range("tape node handle out of range");
    e.parents[e.parent_count++] = p.index;
    e.requires_grad = e.requires_grad || entries_[p.index].requires_grad;
  }
  entries_.push_back(std::move(e));
  return Node{entries_.size() - 1};
}

const Tensor& Tape::grad(Node n) const {
  const Entry& e = entries_.at(n.index);
  if (e.grad.shape() != e.value.shape()) {
    throw std::logic_error("gradient requested for node " + std::to_string(n.index) + " before backward()");
  }
  return e.grad;
}

Tensor& Tape::grad_slot(std::size_t i) { return entries_[i].grad; }

void Tape::backward(Node root) {
  if (root.index >= entries_.size()) throw std::out_of_range("backward root out of range");
  if (!entries_[root.index].value.is_scalar()) {
    throw ShapeError("backward: root must be scalar, got " + to_string(entries_[root.index].value.shape()));
  }
  for (std::size_t i = 0; i <= root.index; ++i) {
    entries_[i].grad = Tensor(entries_[i].value.shape(), 0.0);
  }
  entries_[root.index].grad[0] = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (entries_[i].requires_grad && entries_[i].op != Op::Leaf) propagate(i);
  }
  ++backward_count_;
}

void Tape::propagate(std::size_t i) {
  const Entry& e = entries_[i];
  const Tensor& g = e.grad;
  auto wants = [&](int k) { return entries_[e.parents[k]].requires_grad; };

  switch (e.op) {
    case Op::Leaf:
      return;
    case Op::MatMul: {
      const Tensor& a = entries_[e.parents[0]].value;
      const Tensor& b = entries_[e.parents[1]].value;
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      if (wants(0)) {
        Tensor& ga = grad_slot(e.parents[0]);
        for (std::size_t r = 0; r < m; ++r) {
          const double* grow = &g[r * n];
          for (std::size_t c = 0; c < k; ++c) {
            const double* brow = &b[c * n];
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[r * k + c] += s;
          }
        }
      }
      if (wants(1)) {
        Tensor& gb = grad_slot(e.parents[1]);
        for (std::size_t r = 0; r < m; ++r) {
          const double* grow = &g[r * n];
          for (std::size_t c = 0; c < k; ++c) {
            const double av = a[r * k + c];
            if (av == 0.0) continue;
            double* out = &gb[c * n];
            for (std::size_t j = 0; j < n; ++j) out[j] += av * grow[j];
          }
        }
      }
      return;
    }
    case Op::Add:
    case Op::Sub: {
      const double sign = e.op == Op::Add ? 1.0 : -1.0;
      if (wants(0)) {
        Tensor& ga = grad_slot(e.parents[0]);
        for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j];
      }
      if (wants(1)) {
        Tensor& gb = grad_slot(e.parents[1]);
        for (std::size_t j = 0; j < g.numel(); ++j) gb[j] += sign * g[j];
      }
      return;
    }
    case Op::AddBias: {
      if (wants(0)) {
        Tensor& ga = grad_slot(e.parents[0]);
        for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j];
      }
      if (wants(1)) {
        Tensor& gb = grad_slot(e.parents[1]);
        const std::size_t cols = gb.numel();
        for (std::size_t r = 0; r < g.numel() / cols; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
      return;
    }
    case Op::Relu:
    case Op::ClampMin: {
      if (!wants(0)) return;
      const Tensor& x = entries_[e.parents[0]].value;
      Tensor& ga = grad_slot(e.parents[0]);
      for (std::size_t j = 0; j < g.numel(); ++j) {
        if (x[j] > e.scalar) ga[j] += g[j];
      }
      return;
    }
    case Op::Square: {
      if (!wants(0)) return;
      const Tensor& x = entries_[e.parents[0]].value;
      Tensor& ga = grad_slot(e.parents[0]);
      for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += 2.0 * x[j] * g[j];
      return;
    }
    case Op::Sum: {
      if (!wants(0)) return;
      Tensor& ga = grad_slot(e.parents[0]);
      const double gv = g[0];
      for (std::size_t j = 0; j < ga.numel(); ++j) ga[j] += gv;
      return;
    }
    case Op::Scale: {
      if (!wants(0)) return;
      Tensor& ga = grad_slot(e.parents[0]);
      for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += e.scalar * g[j];
      return;
    }
    case Op::AddScalar: {
      if (!wants(0)) return;
      Tensor& ga = grad_slot(e.parents[0]);
      for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j];
      return;
    }
    case Op::NormalizeRows: {
      if (!wants(0)) return;
      const Tensor& y = e.value;
      Tensor& ga = grad_slot(e.parents[0]);
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = &y[r * cols];
        const double* gr = &g[r * cols];
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
        const double inv = 1.0 / e.aux[r];
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += (gr[c] - yr[c] * dot) * inv;
      }
      return;
    }
    case Op::EuclideanRows: {
      const Tensor& a = entries_[e.parents[0]].value;
      const Tensor& b = entries_[e.parents[1]].value;
      const std::size_t cols = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double d = e.value[r];
        if (d == 0.0 || g[r] == 0.0) continue;
        const double coef = g[r] / d;
        for (std::size_t c = 0; c < cols; ++c) {
          const double diff = a[r * cols + c] - b[r * cols + c];
          if (wants(0)) grad_slot(e.parents[0])[r * cols + c] += coef * diff;
          if (wants(1)) grad_slot(e.parents[1])[r * cols + c] -= coef * diff;
        }
      }
      return;
    }
    case Op::CosineRows: {
      // aux holds per-row (||a||, ||b||).
      const Tensor& a = entries_[e.parents[0]].value;
      const Tensor& b = entries_[e.parents[1]].value;
      const std::size_t cols = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double na = e.aux[2 * r], nb = e.aux[2 * r + 1];
        const double cosv = e.value[r];
        const double gr = g[r];
        for (std::size_t c = 0; c < cols; ++c) {
          const double av = a[r * cols + c], bv = b[r * cols + c];
          if (wants(0)) grad_slot(e.parents[0])[r * cols + c] += gr * (bv / (na * nb) - cosv * av / (na * na));
          if (wants(1)) grad_slot(e.parents[1])[r * cols + c] += gr * (av / (na * nb) - cosv * bv / (nb * nb));
        }
      }
      return;
    }
    case Op::GatherRows: {
      if (!wants(0)) return;
      Tensor& ga = grad_slot(e.parents[0]);
      const std::size_t cols = e.value.cols();
      for (std::size_t k = 0; k < e.indices.size(); ++k) {
        double* dst = &ga[e.indices[k] * cols];
        const double* src = &g[k * cols];
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
      return;
    }
  }
}

Node matmul(Tape& tape, Node an, Node bn) {
  const Tensor& a = tape.value(an);
  const Tensor& b = tape.value(bn);
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  for (std::size_t r = 0; r < m; ++r) {
    double* orow = &out[r * n];
    for (std::size_t c = 0; c < k; ++c) {
      const double av = a[r * k + c];
      const double* brow = &b[c * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return tape.record(Op::MatMul, std::move(out), {an, bn});
}

Node add(Tape& tape, Node an, Node bn) {
  const Tensor& a = tape.value(an);
  const Tensor& b = tape.value(bn);
  require_same_shape("add", a, b);
  Tensor out = a;
  for (std::size_t j = 0; j < out.numel(); ++j) out[j] += b[j];
  return tape.record(Op::Add, std::move(out), {an, bn});
}

Node sub(Tape& tape, Node an, Node bn) {
  const Tensor& a = tape.value(an);
  const Tensor& b = tape.value(bn);
  require_same_shape("sub", a, b);
  Tensor out = a;
  for (std::size_t j = 0; j < out.numel(); ++j) out[j] -= b[j];
  return tape.record(Op::Sub, std::move(out), {an, bn});
}

Node add_bias(Tape& tape, Node an, Node biasn) {
  const Tensor& a = tape.value(an);
  const Tensor& bias = tape.value(biasn);
  require_rank2("add_bias", a);
  if (bias.numel() != a.cols()) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(a.shape()));
  }
  Tensor out = a;
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias[c];
  }
  return tape.record(Op::AddBias, std::move(out), {an, biasn});
}

Node relu(Tape& tape, Node an) {
  Tensor out = tape.value(an);
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return tape.record(Op::Relu, std::move(out), {an}, 0.0);
}

Node clamp_min(Tape& tape, Node an, double c) {
  Tensor out = tape.value(an);
  for (double& v : out.storage()) v = v > c ? v : c;
  return tape.record(Op::ClampMin, std::move(out), {an}, c);
}

Node square(Tape& tape, Node an) {
  Tensor out = tape.value(an);
  for (double& v : out.storage()) v = v * v;
  return tape.record(Op::Square, std::move(out), {an});
}

Node sum(Tape& tape, Node an) {
  double s = 0.0;
  for (double v : tape.value(an).storage()) s += v;
  return tape.record(Op::Sum, Tensor::scalar(s), {an});
}

Node mean(Tape& tape, Node an) {
  const std::size_t n = tape.value(an).numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(tape, sum(tape, an), 1.0 / static_cast<double>(n));
}

Node scale(Tape& tape, Node an, double c) {
  Tensor out = tape.value(an);
  for (double& v : out.storage()) v *= c;
  return tape.record(Op::Scale, std::move(out), {an}, c);
}

Node add_scalar(Tape& tape, Node an, double c) {
  Tensor out = tape.value(an);
  for (double& v : out.storage()) v += c;
  return tape.record(Op::AddScalar, std::move(out), {an}, c);
}

Node l2_normalize_rows(Tape& tape, Node an) {
  const Tensor& a = tape.value(an);
  require_rank2("l2_normalize_rows", a);
  Tensor out = a;
  Tensor norms(Shape{a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double nrm = row_norm(a.row(r));
    if (!(nrm > 0.0)) throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    norms[r] = nrm;
    for (double& v : out.row(r)) v /= nrm;
  }
  return tape.record(Op::NormalizeRows, std::move(out), {an}, 0.0, {}, std::move(norms));
}

Node euclidean_rowwise(Tape& tape, Node an, Node bn) {
  const Tensor& a = tape.value(an);
  const Tensor& b = tape.value(bn);
  require_rank2("euclidean_rowwise", a);
  require_same_shape("euclidean_rowwise", a, b);
  Tensor out(Shape{a.rows()});
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = a[r * cols + c] - b[r * cols + c];
      s += d * d;
    }
    out[r] = std::sqrt(s);
  }
  return tape.record(Op::EuclideanRows, std::move(out), {an, bn});
}

Node cosine_rowwise(Tape& tape, Node an, Node bn) {
  const Tensor& a = tape.value(an);
  const Tensor& b = tape.value(bn);
  require_rank2("cosine_rowwise", a);
  require_same_shape("cosine_rowwise", a, b);
  Tensor out(Shape{a.rows()});
  Tensor norms(Shape{a.rows(), 2});
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double na = row_norm(a.row(r)), nb = row_norm(b.row(r));
    if (!(na > 0.0) || !(nb > 0.0)) {
      throw std::domain_error("cosine_rowwise: row " + std::to_string(r) + " has zero norm");
    }
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += a[r * cols + c] * b[r * cols + c];
    out[r] = dot / (na * nb);
    norms[2 * r] = na;
    norms[2 * r + 1] = nb;
  }
  return tape.record(Op::CosineRows, std::move(out), {an, bn}, 0.0, {}, std::move(norms));
}

Node gather_rows(Tape& tape, Node an, std::vector<std::size_t> indices) {
  const Tensor& a = tape.value(an);
  require_rank2("gather_rows", a);
  Tensor out = hmlab::gather_rows(a, indices);
  return tape.record(Op::GatherRows, std::move(out), {an}, 0.0, std::move(indices));
}

}  // namespace hmlab::grad
