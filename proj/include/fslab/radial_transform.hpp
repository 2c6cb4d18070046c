#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "fslab/errors.hpp"

namespace fslab {

enum class GridKind { bessel_zeros, gauss_log };

// Nodes and weights for ∫_0^∞ f(r) r^{N-1} dr on (0, R].
struct RadialGrid {
  int N = 0;
  double R = 0.0;
  int n = 0;
  GridKind kind = GridKind::bessel_zeros;
  Eigen::VectorXd r, w;
};

RadialGrid build_grid(int N, double R, int n, GridKind kind);

// Quasi-discrete Hankel transform of order N/2-1 on Bessel-zero collocation.
// F maps node samples to frequency samples at rho_m = j_m / R; B inverts it.
// The pair makes B diag(rho^{2s}) F an exactly self-adjoint PSD realization
// of (-Δ)^s in the quadrature inner product.
struct TransformPlan {
  std::shared_ptr<const RadialGrid> grid;
  Eigen::VectorXd rho, wf;  // frequency nodes and weights
  Eigen::MatrixXd F, B;
  double S = 0.0;   // cutoff zero j_{nu,n+1}
  double nu = 0.0;  // N/2 - 1

  int N() const { return grid->N; }
  int n() const { return grid->n; }
  double R() const { return grid->R; }
};

TransformPlan build_plan(int N, double R, int n);

// Dense matrix of (-Δ)^s restricted to the plan's ball (no tail handling).
Eigen::MatrixXd operator_matrix(const TransformPlan& plan, double s);

// Sampled radial function. Dilations and rescalings act on the metadata
// fields so the paper's exact scaling identities hold to machine precision:
// the represented function is x ↦ v_scale * vals(|x| / r_scale) on nodes
// r_scale * grid.r.
struct RadialProfile {
  std::shared_ptr<const RadialGrid> grid;
  Eigen::VectorXd vals;
  std::optional<double> tail_exp;  // declared algebraic decay beyond R
  // Quantitative tail model for the base samples when known:
  // vals(r) ~ amp[0] (1+(r/tail_rho)^2)^{-e/2} + amp[1] (...)^{-(e+2)/2}
  // with e = *tail_exp. Solvers fill it; norm and operator completions use
  // it directly, and fall back to a window fit when only tail_exp is set.
  std::optional<Eigen::Vector2d> tail_amp;
  double tail_rho = 1.0;
  double r_scale = 1.0;
  double v_scale = 1.0;

  int n() const { return grid ? grid->n : 0; }
  double node(int i) const { return r_scale * grid->r[i]; }
  double value(int i) const { return v_scale * vals[i]; }
  double max_radius() const { return r_scale * grid->R; }
};

RadialProfile make_profile(std::shared_ptr<const RadialGrid> grid,
                           Eigen::VectorXd vals,
                           std::optional<double> tail_exp = std::nullopt);

// (-Δ)^s u. With a declared tail the profile is split into an algebraic
// template pair (matched at the declared exponent) whose image is known in
// closed form, plus a compactly supported remainder handled by the discrete
// operator; without it the raw ball operator is used and the result is only
// trustworthy where truncation is negligible.
RadialProfile frac_laplacian(const TransformPlan& plan, const RadialProfile& u,
                             double s);

// ((-Δ)^s + a)^{-1} f, diagonal in the transform basis.
RadialProfile resolvent(const TransformPlan& plan, const RadialProfile& f,
                        double s, double a);

// ω_N ∫ |u|^t r^{N-1} dr, with a model tail beyond R when the declared decay
// makes it integrable; DivergentNorm when it does not.
double lp_norm_pow(const RadialProfile& u, double t);
double lp_norm(const RadialProfile& u, double t);

// ⟨(-Δ)^s u, u⟩ = ∫ |ξ|^{2s} |û|^2, compensated the same way.
double seminorm_sq(const TransformPlan& plan, const RadialProfile& u, double s);

// Monotone cubic resample onto another grid; beyond the source radius the
// declared tail exponent extrapolates, TailUnknown without one.
RadialProfile resample(const RadialProfile& u,
                       std::shared_ptr<const RadialGrid> target);

namespace detail {
// (-Δ)^s (1 + |x|^2)^{-beta/2} evaluated at |x| = y (unit concentration).
double philap(int N, double s, double beta, double y);
// Gauss-Legendre nodes/weights on [0,1].
void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w);
void gl32(std::vector<double>& x, std::vector<double>& w);

// (-Δ)^s via the transform pair, grid samples only (no tail model).
Eigen::VectorXd ball_apply(const TransformPlan& plan, double s,
                           const Eigen::VectorXd& u);

// Template pair (1+(r/rho)^2)^{-beta/2}, exponent beta and beta+2, with
// exact operator images P and ball-operator defects D = P - L_ball T.
struct TailPair {
  int N = 0;
  double rho = 1.0, beta = 0.0, s = 0.0;
  Eigen::VectorXd T1, T2, P1, P2, D1, D2;
  Eigen::Matrix2d G;  // quadrature Gram of (T1, T2)

  void refresh_templates(const RadialGrid& g, double rho, double beta);
  // templates plus exact images and defects
  void refresh(const TransformPlan& plan, double rho, double beta, double s);
  // global quadrature-weighted projection onto span(T1, T2)
  Eigen::Vector2d fit(const RadialGrid& g, const Eigen::VectorXd& u) const;
  // ratio least squares (u/T1 against [1, T2/T1]) on nodes in [lo, hi] * R
  Eigen::Vector2d fit_window(const RadialGrid& g, const Eigen::VectorXd& u,
                             double lo = 0.5, double hi = 0.9) const;
};
}  // namespace detail

}  // namespace fslab
