#pragma once

#include "fslab/solver.hpp"

namespace fslab {

// One converged lambda along a sweep. Norm fields are for the original
// profile u_lambda; the distances are for the rescaled profile v_lambda
// against the limit profile (optimal bubble or lambda = 0 ground state).
struct SweepRecord {
  double lambda = 0.0;
  double u0_peak = 0.0;
  double l2_sq = 0.0;
  double lq_q = 0.0;
  double lp_p = 0.0;
  double seminorm_sq = 0.0;
  double m_lambda = 0.0;  // ground-state energy level J(v) = I(u)
  double dist_sup = 0.0;
  double dist_seminorm = 0.0;
  double tau = 0.0;
  double tail_slope = 0.0;
};

struct Sweep {
  std::vector<SweepRecord> records;  // ordered as the schedule
  // lambda = 0 reference: closed bubble forms (critical) or the limit solve
  // (subcritical). Divergent entries are NaN.
  SweepRecord limit;
  double m0 = 0.0;
  double limit_peak = 0.0;  // U_{rho0}(0) resp. u_0(0)
};

struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double lambda_min = 0.0, lambda_max = 0.0;
  int count = 0;
};

enum class SweepQuantity {
  u0_peak,
  l2_sq,
  lq_q,
  lp_p,
  seminorm_sq,
  m_lambda,
  dist_sup,
  dist_seminorm,
  tau_gap  // tau - 1
};

enum class FitTransform {
  raw,            // fit log(quantity) against log(lambda)
  gap_from_limit  // fit log(limit - quantity), sign-adjusted
};

// Continuation solve over the schedule plus the limit reference. Schedule
// must be geometric and decreasing.
Sweep sweep(const ProblemParams& base, const std::vector<double>& lambdas,
            const TransformPlan& plan, const SolverOptions& opts = {});

// Log-log least squares. The largest-lambda third of the records is excluded
// (the scaling laws are asymptotic); NonPositiveData when the transformed
// quantity is not strictly positive on the window or fewer than 4 points
// remain.
ExponentFit fit_exponent(const Sweep& sweep, SweepQuantity quantity,
                         FitTransform transform);

struct LimitDistance {
  double sup = 0.0;           // max over nodes of |v - reference|
  double seminorm_gap = 0.0;  // |ref_seminorm_sq - [v]^2|
};

LimitDistance limit_profile_distance(const TransformPlan& plan,
                                     const RadialProfile& v,
                                     const ScalarFn& reference,
                                     double ref_seminorm_sq, double s);

// Cutoff scale for the low-dimension energy bound: lambda^{-M} when N = 4s,
// M * lambda^{-2/((N-2s)q - 4s)} when N < 4s.
double lowdim_ell(const ProblemParams& params, double lambda, double M = 3.0);

// Energy of the best dilation of the cutoff bubble family eta_ell * U_rho1:
// evaluates sup_t J_lambda((eta_ell U_rho1)_t) from closed shell expansions
// of the cutoff norms plus a one-time quadrature for the cutoff seminorm
// defect, and returns the resulting upper bound for m_lambda. Requires
// 2s < N <= 4s and q > 4s/(N-2s); InvalidRegime otherwise.
double lowdim_upper_bound(const ProblemParams& params, double ell,
                          const TransformPlan& plan);

struct Concentration {
  double xi = 0.0;
  RadialProfile w;  // xi^{(N-2s)/2} v(xi .), metadata-scaled
};

// Peak-matching normalization w(0) = U_1(0); exact on the dilation family.
Concentration extract_concentration(const RadialProfile& v,
                                    const DerivedConstants& c);

// Fitted d log u / d log r over the last decade of the grid.
double tail_slope(const RadialProfile& u);

}  // namespace fslab
