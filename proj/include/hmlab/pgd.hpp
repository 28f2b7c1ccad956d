#pragma once

#include <functional>
#include <vector>

#include "hmlab/gradcore.hpp"

namespace hmlab {

/// L-infinity feasible set: ||r||_inf <= epsilon and X + r inside [domain_lo, domain_hi].
struct PerturbationBudget {
  double epsilon = 8.0 / 255.0;
  double alpha = 1.0 / 255.0;
  std::size_t steps = 8;
  double domain_lo = 0.0;
  double domain_hi = 1.0;

  void validate() const;
};

/// Builds a scalar objective on the tape from the perturbed-input node [B x n].
/// Rows must be independent samples: a row's gradient decides its own update.
using Objective = std::function<grad::Node(grad::Tape&, grad::Node perturbed)>;

struct PgdOptions {
  /// Starting perturbation (projected before use). Empty means start from zero.
  Tensor initial;
  /// Called after every projected step with the step index and the current perturbation.
  std::function<void(std::size_t, const Tensor&)> on_step;
};

struct PgdResult {
  Tensor perturbation;
  std::size_t backward_passes = 0;
  std::vector<double> objective_trace;  // objective value at the start of each step
  std::vector<bool> active;             // rows still moving at the end
};

/// Clamps r into the epsilon box, then so that X + r stays inside the domain.
Tensor project(const Tensor& r, const Tensor& x, const PerturbationBudget& budget);
bool is_feasible(const Tensor& r, const Tensor& x, const PerturbationBudget& budget);

/// Sign-gradient ascent: r <- Proj(r + alpha * sign(grad)) for budget.steps
/// iterations. A row whose gradient is exactly zero or non-finite stops moving.
/// Always performs exactly budget.steps backward passes.
PgdResult pgd_maximize(const Objective& objective, const Tensor& x, const PerturbationBudget& budget,
                       const PgdOptions& options = {});
/// Same as pgd_maximize with the sign of the update flipped.
PgdResult pgd_minimize(const Objective& objective, const Tensor& x, const PerturbationBudget& budget,
                       const PgdOptions& options = {});

}  // namespace hmlab
