#pragma once

#include <cmath>
#include <functional>

#include "fslab/errors.hpp"

namespace fslab {

struct TransformPlan;  // radial_transform.hpp

// Problem data for (-Δ)^s u + u = u^{p-1} + λ u^{q-1} on ℝ^N.
struct ProblemParams {
  int N = 3;
  double s = 0.5;
  double p = 3.0;  // critical means p = 2N/(N-2s)
  double q = 2.5;
  double lambda = 0.0;

  double two_star() const { return 2.0 * N / (N - 2.0 * s); }
  // p is user-supplied; exact equality with 2N/(N-2s) is brittle
  bool critical() const { return std::abs(p - two_star()) < 1e-12; }
  void validate() const;  // throws InvalidParams
};

enum class ExistenceCase { subcritical, critical_highdim, critical_lowdim };

struct DerivedConstants {
  int N;
  double s, p, q;
  double two_star;       // 2N/(N-2s)
  double sigma;          // (2*-2)/(q-2)
  double d;              // N-2s, the bubble decay exponent
  double omega_N;        // surface measure of the unit sphere
  double c_Ns;           // bubble amplitude (Gamma-ratio candidate, see c_ns)
  ExistenceCase existence_case;
};

DerivedConstants derive_constants(const ProblemParams& params);

// B(x,y) via log-Gamma differences; DomainError for nonpositive arguments.
double beta_fn(double x, double y);

// A radial scalar function with its algebraic decay exponent at infinity.
struct ScalarFn {
  std::function<double(double)> f;
  double decay = 0.0;
  double operator()(double r) const { return f(r); }
};

// U_rho(r) = c_Ns rho^{-(N-2s)/2} (1+(r/rho)^2)^{-(N-2s)/2}
ScalarFn talenti(double rho, const DerivedConstants& c);

// ||U_1||_t^t in closed Beta form; DivergentNorm when (N-2s) t <= N.
double talenti_norm(double t, const DerivedConstants& c);

// Bubble amplitude. The paper never states it; the Gamma-ratio candidate is
//   c_Ns = (4^s Γ((N+2s)/2) / Γ((N-2s)/2))^{(N-2s)/(4s)}
// and the spectral-residual oracle (c_ns_verified) is authoritative.
double c_ns(const DerivedConstants& c);

// Candidate accepted only if the discrete PDE residual of U_1 on the plan is
// below 1e-6 relative; throws OracleMismatch otherwise.
double c_ns_verified(const DerivedConstants& c, const TransformPlan& plan);
// Residual of amplitude*U_1/c_Ns as a solution candidate (oracle internals,
// exposed so tests can show a doubled amplitude fails).
double amplitude_residual(const DerivedConstants& c, const TransformPlan& plan,
                          double amplitude);

// Optimal concentration of g0; needs both norms finite (N > 4s).
double rho0(const DerivedConstants& c);

struct QG {
  double Q, G, theta;  // theta = (2*-q)/(2*-2)
};
QG q_g(const DerivedConstants& c);

// g0(rho) = (1/q) rho^{N-q(N-2s)/2} ||U_1||_q^q - (1/2) rho^{2s} ||U_1||_2^2
double g0(double rho, const DerivedConstants& c);

// psi(r) = (1-r^2)/(1+r^2)^{(N-2s+2)/2}, the radial kernel profile.
ScalarFn psi_fn(const DerivedConstants& c);

// Quadrature of ω_N ∫ psi U_1^{t-1} r^{N-1} dr against the closed Beta form
// (1/c_Ns) (-2N+(N-2s)t)/((N-2s)t) ||U_1||_t^t.
struct IdentityPair {
  double lhs, rhs;
};
IdentityPair appendix_identity(double t, const DerivedConstants& c);

}  // namespace fslab
