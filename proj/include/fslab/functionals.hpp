#pragma once

#include "fslab/closedforms.hpp"
#include "fslab/radial_transform.hpp"

namespace fslab {

enum class EnergyTag { I, J };

// Assembled norms and variational residuals of a single profile. Residuals
// are relative to the dominant positive term so tolerances are scale-free.
struct EnergyReport {
  double seminorm_sq = 0.0;  // [u]^2
  double l2_sq = 0.0;        // ||u||_2^2
  double lp_p = 0.0;         // ||u||_p^p
  double lq_q = 0.0;         // ||u||_q^q
  double lcrit = 0.0;        // ||u||_{2*}^{2*}
  double energy = 0.0;
  EnergyTag tag = EnergyTag::I;
  double nehari_residual = 0.0;
  double pohozaev_residual = 0.0;
};

// I_lambda(u) = 1/2 [u]^2 + 1/2 ||u||_2^2 - 1/p ||u||_p^p - lambda/q ||u||_q^q
// with Nehari defect [u]^2 + ||u||_2^2 - ||u||_p^p - lambda ||u||_q^q and the
// matching Pohozaev defect.
EnergyReport energy_I(const TransformPlan& plan, const RadialProfile& u,
                      const ProblemParams& params);

// The rescaled functional
// J_lambda(v) = 1/2 [v]^2 + lambda^sigma/2 ||v||_2^2
//               - 1/2* ||v||_{2*}^{2*} - lambda^sigma/q ||v||_q^q.
EnergyReport energy_J(const TransformPlan& plan, const RadialProfile& v,
                      const ProblemParams& params);

// v(x) = lambda^{1/(q-2)} u(lambda^{(2*-2)/(2s(q-2))} x) and its inverse.
// Pure metadata rescalings (nodes and values carry scale factors), so the
// conjugacy J(v) = I(u) holds exactly at the level of assembled quadratures.
RadialProfile rescale_u_to_v(const RadialProfile& u,
                             const ProblemParams& params);
RadialProfile rescale_v_to_u(const RadialProfile& v,
                             const ProblemParams& params);

// v_t(x) = v(x/t), a metadata dilation: ||v_t||_r^r = t^N ||v||_r^r and
// [v_t]^2 = t^{N-2s} [v]^2 exactly.
RadialProfile dilate(const RadialProfile& v, double t);

// c * v, for amplitude fibering scans.
RadialProfile scale_amplitude(const RadialProfile& v, double c);

struct Scalings {
  double t_nehari = 0.0;    // t(v): t*v lies on the Nehari set
  double t_pohozaev = 0.0;  // argmax of t -> J_lambda(v_t)
};

// Closed-form fibering optima: t(v)^{2s} and ttilde(v)^{2s} are ratios of the
// assembled norms. InfeasibleScaling when a denominator is nonpositive (the
// fibering map is then unbounded above).
Scalings optimal_scalings(const TransformPlan& plan, const RadialProfile& v,
                          const ProblemParams& params);

// tau(v) = [v]^2 / ||v||_{2*}^{2*}; equals 1 exactly on the bubble family.
double tau(const TransformPlan& plan, const RadialProfile& v,
           const ProblemParams& params);

// tau^{(N-2s)/(4s)}, the dilation-free projector factor onto tau = 1.
double nehari0_projector(double tau_value, const DerivedConstants& c);

// sup over t of J(t*v) resp. J(v_t), geometric scan on [1e-3, 1e3] refined by
// golden section (fibering maps are single-peaked for these nonlinearities).
double sup_amplitude_energy(const TransformPlan& plan, const RadialProfile& v,
                            const ProblemParams& params);
double sup_dilation_energy(const TransformPlan& plan, const RadialProfile& v,
                           const ProblemParams& params);

}  // namespace fslab
