#pragma once

#include <optional>
#include <vector>

#include "fslab/functionals.hpp"

namespace fslab {

enum class SolveForm { original, rescaled };

struct GroundState {
  RadialProfile profile;
  ProblemParams params;
  EnergyReport report;
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  // diagnostics
  double rho_hat = 0.0;          // fitted concentration scale of the tail
  Eigen::Vector2d tail_amp{0, 0};  // two-term algebraic tail amplitudes
};

struct SolverOptions {
  double tol_residual = 1e-8;
  int max_iter = 5000;
  double damping = 1.0;  // in (0,1]
  SolveForm form = SolveForm::original;
  std::optional<GroundState> continuation_from;
  bool trace = false;
};

// Positive radially decreasing ground state of
//   (-Delta)^s u + u = u^{p-1} + lambda u^{q-1}
// or of the rescaled critical form
//   (-Delta)^s v + lambda^sigma v = v^{2*-1} + lambda^sigma v^{q-1}.
// Warm start by damped resolvent (Picard) iteration with Nehari projection,
// then Newton polish on the compensated discretization until the relative
// PDE residual drops below tol. The critical regime always solves the
// rescaled form internally (the original profile degenerates as lambda -> 0)
// and converts to the requested form by exact metadata rescaling.
// Errors: NoSolution (critical lambda = 0 with mass term), Diverged,
// CollapseToZero.
GroundState solve_ground_state(const ProblemParams& params,
                               const TransformPlan& plan,
                               const SolverOptions& opts = {});

// Warm-started family along a strictly monotone lambda schedule; between
// consecutive lambdas the previous profile is transported by the exact
// rescaling. Solver errors are rethrown with the failing lambda attached.
std::vector<GroundState> continuation_solve(const ProblemParams& base,
                                            const TransformPlan& plan,
                                            const std::vector<double>& lambdas,
                                            const SolverOptions& opts = {});

// Relative strong-form residual
//   ||(-Delta)^s u + u - u^{p-1} - lambda u^{q-1}||_2 / ||u||_2
// in the quadrature-weighted norm; 0 for the zero profile.
double pde_residual(const RadialProfile& u, const ProblemParams& params,
                    const TransformPlan& plan);

// Positive decreasing seed with the correct declared tail exponent:
// the optimally concentrated bubble (critical) or a Talenti-shaped bump
// scaled onto the Nehari set (subcritical).
RadialProfile init_guess(const ProblemParams& params,
                         const TransformPlan& plan);

}  // namespace fslab
