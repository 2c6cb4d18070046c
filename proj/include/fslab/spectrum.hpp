#pragma once

#include <string>

#include "fslab/solver.hpp"

namespace fslab {

// Linearized operator in the similarity frame y = sqrt(w) phi: K is plainly
// symmetric there, and eigenpairs of K are exactly the eigenpairs of the
// weighted-inner-product discretization.
struct LinearOperator {
  Eigen::MatrixXd K;
  std::string descriptor;
  std::shared_ptr<const RadialGrid> grid;
};

struct SpectrumReport {
  std::vector<double> eigs;  // sorted by magnitude
  double margin = 0.0;       // min |eigenvalue|
  std::vector<double> kernel_residuals;  // ||K y - mu y|| per reported pair
};

// L = (-Delta)^s + m - (p-1) u^{p-2} - lambda_coef (q-1) u^{q-2} at the
// ground state, in whichever form gs carries (mass m and coefficient match
// the solved equation). Tail templates complete the potential terms beyond
// the grid so the quadratic form matches the assembled norms.
LinearOperator linearize(const GroundState& gs, const TransformPlan& plan);

// Linearization of the critical limit equation (-Delta)^s psi = (2*-1)
// U_1^{2*-2} psi (no mass term), whose radial kernel is one-dimensional.
LinearOperator linearize_critical_limit(const DerivedConstants& c,
                                        const TransformPlan& plan);

// k smallest-magnitude eigenpairs by shift-invert Lanczos at shift 0.
// SingularShift when the factorization detects an exactly singular matrix.
SpectrumReport near_zero_eigs(const LinearOperator& L, int k);

// Nondegeneracy margin of the ground-state linearization. In the critical
// regime the one-dimensional kernel direction of the limit operator is
// deflated first (margin modulo the dilation mode); subcritical is the raw
// smallest magnitude.
double nondegeneracy_margin(const GroundState& gs, const TransformPlan& plan);

struct KernelCheck {
  double residual = 0.0;         // ||(-D)^s psi - (2*-1) U_1^{2*-2} psi|| rel
  double proportionality = 0.0;  // max |(d/2) U_1 + r U_1' - c psi| rel
  double constant = 0.0;         // fitted c, should be c_Ns (N-2s)/2
};

KernelCheck critical_kernel_check(const DerivedConstants& c,
                                  const TransformPlan& plan);

// Relative weighted-L2 defect of
//   (-Delta)^s (r u') - [ r d/dr((-Delta)^s u) + 2s (-Delta)^s u ],
// radial derivatives taken spectrally.
double scaling_commutator_check(const RadialProfile& u, double s,
                                const TransformPlan& plan);

// Both sides of the kernel-orthogonality identity
//   int psi U_1 = (q/2) (||U_1||_2^2 / ||U_1||_q^q) int psi U_1^{q-1};
// they agree only at q = 2, and their computable ratio feeds the uniqueness
// contradiction. DivergentNorm unless N > 4s.
IdentityPair orthogonality_contradiction_check(const DerivedConstants& c,
                                               const TransformPlan& plan);

}  // namespace fslab
