#include "fslab/functionals.hpp"

#include <cmath>
#include <limits>

namespace fslab {

namespace {

struct Assembled {
  double semi = 0, l2 = 0, lp = 0, lq = 0, lcrit = 0;
};

void require_nonzero(const RadialProfile& u, const char* who) {
  if (!u.grid || u.vals.size() == 0 || u.v_scale == 0.0 ||
      u.vals.lpNorm<Eigen::Infinity>() == 0.0)
    throw ZeroProfile(std::string(who) + ": zero profile");
}

Assembled assemble(const TransformPlan& plan, const RadialProfile& u,
                   const ProblemParams& params) {
  Assembled a;
  a.semi = seminorm_sq(plan, u, params.s);
  a.l2 = lp_norm_pow(u, 2.0);
  a.lq = lp_norm_pow(u, params.q);
  a.lcrit = lp_norm_pow(u, params.two_star());
  a.lp = params.critical() ? a.lcrit : lp_norm_pow(u, params.p);
  return a;
}

double rel(double defect, double scale) {
  return std::abs(defect) / scale;
}

// single-peaked scalar maximization: geometric scan then golden section
template <class F>
double sup_scan(const F& f) {
  const int m = 601;
  double best = -1e300, tb = 1.0;
  for (int i = 0; i < m; ++i) {
    double t = std::pow(10.0, -3.0 + 6.0 * i / (m - 1.0));
    double y = f(t);
    if (y > best) {
      best = y;
      tb = t;
    }
  }
  double lo = tb / 1.03, hi = tb * 1.03;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
  double f1 = f(c1), f2 = f(c2);
  for (int it = 0; it < 120; ++it) {
    if (f1 < f2) {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + gr * (b - a);
      f2 = f(c2);
    } else {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - gr * (b - a);
      f1 = f(c1);
    }
    if (b - a < 1e-13 * b) break;
  }
  return std::max(f1, f2);
}

}  // namespace

EnergyReport energy_I(const TransformPlan& plan, const RadialProfile& u,
                      const ProblemParams& params) {
  require_nonzero(u, "energy_I");
  params.validate();
  Assembled a = assemble(plan, u, params);
  double N = plan.N(), d = N - 2.0 * params.s, lam = params.lambda;
  EnergyReport r;
  r.seminorm_sq = a.semi;
  r.l2_sq = a.l2;
  r.lp_p = a.lp;
  r.lq_q = a.lq;
  r.lcrit = a.lcrit;
  r.tag = EnergyTag::I;
  r.energy = 0.5 * a.semi + 0.5 * a.l2 - a.lp / params.p - lam * a.lq / params.q;
  r.nehari_residual =
      rel(a.semi + a.l2 - a.lp - lam * a.lq, a.semi + a.l2);
  r.pohozaev_residual =
      rel(0.5 * d * a.semi + 0.5 * N * a.l2 - N * a.lp / params.p -
              N * lam * a.lq / params.q,
          0.5 * d * a.semi + 0.5 * N * a.l2);
  return r;
}

EnergyReport energy_J(const TransformPlan& plan, const RadialProfile& v,
                      const ProblemParams& params) {
  require_nonzero(v, "energy_J");
  params.validate();
  Assembled a = assemble(plan, v, params);
  double N = plan.N(), d = N - 2.0 * params.s;
  double ts = params.two_star();
  double ls = std::pow(params.lambda, (ts - 2.0) / (params.q - 2.0));
  EnergyReport r;
  r.seminorm_sq = a.semi;
  r.l2_sq = a.l2;
  r.lp_p = a.lp;
  r.lq_q = a.lq;
  r.lcrit = a.lcrit;
  r.tag = EnergyTag::J;
  r.energy = 0.5 * a.semi + 0.5 * ls * a.l2 - a.lcrit / ts - ls * a.lq / params.q;
  r.nehari_residual =
      rel(a.semi + ls * a.l2 - a.lcrit - ls * a.lq, a.semi + ls * a.l2);
  r.pohozaev_residual =
      rel(0.5 * d * a.semi + 0.5 * N * ls * a.l2 - N * a.lcrit / ts -
              N * ls * a.lq / params.q,
          0.5 * d * a.semi + 0.5 * N * ls * a.l2);
  return r;
}

RadialProfile rescale_u_to_v(const RadialProfile& u,
                             const ProblemParams& params) {
  params.validate();
  if (!(params.lambda > 0.0))
    throw InvalidParams("rescale: lambda must be positive");
  double kappa = (params.two_star() - 2.0) / (2.0 * params.s * (params.q - 2.0));
  RadialProfile v = u;
  v.r_scale *= std::pow(params.lambda, -kappa);
  v.v_scale *= std::pow(params.lambda, 1.0 / (params.q - 2.0));
  return v;
}

RadialProfile rescale_v_to_u(const RadialProfile& v,
                             const ProblemParams& params) {
  params.validate();
  if (!(params.lambda > 0.0))
    throw InvalidParams("rescale: lambda must be positive");
  double kappa = (params.two_star() - 2.0) / (2.0 * params.s * (params.q - 2.0));
  RadialProfile u = v;
  u.r_scale *= std::pow(params.lambda, kappa);
  u.v_scale *= std::pow(params.lambda, -1.0 / (params.q - 2.0));
  return u;
}

RadialProfile dilate(const RadialProfile& v, double t) {
  if (!(t > 0.0)) throw InvalidParams("dilate: t must be positive");
  RadialProfile out = v;
  out.r_scale *= t;
  return out;
}

RadialProfile scale_amplitude(const RadialProfile& v, double c) {
  RadialProfile out = v;
  out.v_scale *= c;
  return out;
}

Scalings optimal_scalings(const TransformPlan& plan, const RadialProfile& v,
                          const ProblemParams& params) {
  require_nonzero(v, "optimal_scalings");
  Assembled a = assemble(plan, v, params);
  double ts = params.two_star();
  double ls = std::pow(params.lambda, (ts - 2.0) / (params.q - 2.0));
  double den_n = a.lcrit + ls * a.lq - ls * a.l2;
  double den_p = a.lcrit / ts + ls * a.lq / params.q - ls * a.l2 / 2.0;
  if (!(den_n > 0.0) || !(den_p > 0.0))
    throw InfeasibleScaling("optimal_scalings: fibering map unbounded above");
  Scalings out;
  out.t_nehari = std::pow(a.semi / den_n, 1.0 / (2.0 * params.s));
  out.t_pohozaev = std::pow(a.semi / (ts * den_p), 1.0 / (2.0 * params.s));
  return out;
}

double tau(const TransformPlan& plan, const RadialProfile& v,
           const ProblemParams& params) {
  require_nonzero(v, "tau");
  double semi = seminorm_sq(plan, v, params.s);
  double lcrit = lp_norm_pow(v, params.two_star());
  return semi / lcrit;
}

double nehari0_projector(double tau_value, const DerivedConstants& c) {
  if (!(tau_value > 0.0))
    throw InvalidParams("nehari0_projector: tau must be positive");
  return std::pow(tau_value, c.d / (4.0 * c.s));
}

double sup_amplitude_energy(const TransformPlan& plan, const RadialProfile& v,
                            const ProblemParams& params) {
  require_nonzero(v, "sup_amplitude_energy");
  Assembled a = assemble(plan, v, params);
  double ts = params.two_star();
  double ls = std::pow(params.lambda, (ts - 2.0) / (params.q - 2.0));
  double q = params.q;
  auto J = [&](double t) {
    return 0.5 * t * t * (a.semi + ls * a.l2) -
           std::pow(t, ts) * a.lcrit / ts - ls * std::pow(t, q) * a.lq / q;
  };
  return sup_scan(J);
}

double sup_dilation_energy(const TransformPlan& plan, const RadialProfile& v,
                           const ProblemParams& params) {
  require_nonzero(v, "sup_dilation_energy");
  Assembled a = assemble(plan, v, params);
  double ts = params.two_star();
  double ls = std::pow(params.lambda, (ts - 2.0) / (params.q - 2.0));
  double N = plan.N(), d = N - 2.0 * params.s;
  double B = a.lcrit / ts + ls * a.lq / params.q - ls * a.l2 / 2.0;
  // dichotomy of the dilation ray: with B <= 0 both terms grow with t and
  // the fibering energy is unbounded above
  if (!(B > 0)) return std::numeric_limits<double>::infinity();
  auto J = [&](double t) {
    return 0.5 * std::pow(t, d) * a.semi - std::pow(t, N) * B;
  };
  return sup_scan(J);
}

}  // namespace fslab
