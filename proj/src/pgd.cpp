#include "hmlab/pgd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hmlab {

void PerturbationBudget::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(alpha > 0.0) || alpha > epsilon) throw ConfigError("alpha must satisfy 0 < alpha <= epsilon");
  if (steps < 1) throw ConfigError("PGD step count must be >= 1");
  if (!(domain_lo < domain_hi)) throw ConfigError("domain_lo must be below domain_hi");
}

Tensor project(const Tensor& r, const Tensor& x, const PerturbationBudget& budget) {
  if (r.shape() != x.shape()) {
    throw ShapeError("project: perturbation " + to_string(r.shape()) + " vs input " + to_string(x.shape()));
  }
  Tensor out = r;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double v = std::clamp(out[i], -budget.epsilon, budget.epsilon);
    const double xi = x[i];
    // Recomputing v as clamp(X + v) - X for in-domain points can round |v| past epsilon.
    if (xi + v > budget.domain_hi) v = budget.domain_hi - xi;
    if (xi + v < budget.domain_lo) v = budget.domain_lo - xi;
    // The subtraction above can round X + r one ulp past a bound.
    while (xi + v > budget.domain_hi) v = std::nextafter(v, -kInf);
    while (xi + v < budget.domain_lo) v = std::nextafter(v, kInf);
    out[i] = v;
  }
  return out;
}

bool is_feasible(const Tensor& r, const Tensor& x, const PerturbationBudget& budget) {
  if (r.shape() != x.shape()) return false;
  for (std::size_t i = 0; i < r.numel(); ++i) {
    if (!(std::abs(r[i]) <= budget.epsilon)) return false;
    const double v = x[i] + r[i];
    if (v < budget.domain_lo || v > budget.domain_hi) return false;
  }
  return true;
}

namespace {

PgdResult run_pgd(const Objective& objective, const Tensor& x, const PerturbationBudget& budget,
                  const PgdOptions& options, double direction) {
  budget.validate();
  if (x.rank() != 2) throw ShapeError("pgd: expected [B x n] inputs, got " + to_string(x.shape()));
  const std::size_t rows = x.rows(), cols = x.cols();
  PgdResult result;
  result.perturbation = options.initial.numel() ? project(options.initial, x, budget) : Tensor(x.shape(), 0.0);
  result.active.assign(rows, true);
  Tensor& r = result.perturbation;

  for (std::size_t step = 0; step < budget.steps; ++step) {
    grad::Tape tape;
    Tensor perturbed = x;
    for (std::size_t i = 0; i < perturbed.numel(); ++i) perturbed[i] += r[i];
    const grad::Node input = tape.leaf(std::move(perturbed), true);
    const grad::Node value = objective(tape, input);
    result.objective_trace.push_back(tape.value(value).item());
    tape.backward(value);
    ++result.backward_passes;
    const Tensor& g = tape.grad(input);

    for (std::size_t row = 0; row < rows; ++row) {
      if (!result.active[row]) continue;
      bool finite = true, nonzero = false;
      for (std::size_t c = 0; c < cols; ++c) {
        const double gv = g[row * cols + c];
        finite = finite && std::isfinite(gv);
        nonzero = nonzero || gv != 0.0;
      }
      if (!finite || !nonzero) {
        result.active[row] = false;
        continue;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        const double gv = direction * g[row * cols + c];
        if (gv > 0.0) {
          r[row * cols + c] += budget.alpha;
        } else if (gv < 0.0) {
          r[row * cols + c] -= budget.alpha;
        }
      }
    }
    r = project(r, x, budget);
    if (!is_feasible(r, x, budget)) throw std::logic_error("pgd: projection produced an infeasible perturbation");
    if (options.on_step) options.on_step(step, r);
  }
  return result;
}

}  // namespace

PgdResult pgd_maximize(const Objective& objective, const Tensor& x, const PerturbationBudget& budget,
                       const PgdOptions& options) {
  return run_pgd(objective, x, budget, options, 1.0);
}

PgdResult pgd_minimize(const Objective& objective, const Tensor& x, const PerturbationBudget& budget,
                       const PgdOptions& options) {
  return run_pgd(objective, x, budget, options, -1.0);
}

}  // namespace hmlab
