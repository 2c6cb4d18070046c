#include "fslab/closedforms.hpp"

#include <cmath>

#include "fslab/radial_transform.hpp"

namespace fslab {

namespace {

double surface_measure(int N) {
  return 2.0 * std::pow(M_PI, N / 2.0) / std::tgamma(N / 2.0);
}

}  // namespace

void ProblemParams::validate() const {
  if (N < 1) throw InvalidParams("dimension must be a positive integer");
  if (!(s > 0.0 && s < 1.0)) throw InvalidParams("s must lie in (0,1)");
  if (!(N > 2.0 * s)) throw InvalidParams("need N > 2s");
  double ts = two_star();
  if (!(p > 2.0)) throw InvalidParams("p must exceed 2");
  if (p > ts + 1e-12) throw InvalidParams("p beyond the critical exponent");
  if (!(q > 2.0 && q < p)) throw InvalidParams("need 2 < q < p");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InvalidParams("lambda must be finite and nonnegative");
}

DerivedConstants derive_constants(const ProblemParams& params) {
  params.validate();
  DerivedConstants c;
  c.N = params.N;
  c.s = params.s;
  c.p = params.p;
  c.q = params.q;
  c.two_star = params.two_star();
  c.sigma = (c.two_star - 2.0) / (c.q - 2.0);
  c.d = c.N - 2.0 * c.s;
  c.omega_N = surface_measure(c.N);
  c.c_Ns = std::pow(std::pow(4.0, c.s) * std::tgamma((c.N + 2.0 * c.s) / 2.0) /
                        std::tgamma((c.N - 2.0 * c.s) / 2.0),
                    c.d / (4.0 * c.s));
  if (!params.critical())
    c.existence_case = ExistenceCase::subcritical;
  else
    c.existence_case = (c.N > 4.0 * c.s) ? ExistenceCase::critical_highdim
                                         : ExistenceCase::critical_lowdim;
  return c;
}

double beta_fn(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0))
    throw DomainError("beta_fn: arguments must be positive");
  return std::exp(std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y));
}

ScalarFn talenti(double rho, const DerivedConstants& c) {
  if (!(rho > 0.0)) throw InvalidParams("talenti: rho must be positive");
  double amp = c.c_Ns * std::pow(rho, -c.d / 2.0);
  double d = c.d;
  return ScalarFn{
      [amp, rho, d](double r) {
        double y = r / rho;
        return amp * std::pow(1.0 + y * y, -d / 2.0);
      },
      d};
}

double talenti_norm(double t, const DerivedConstants& c) {
  if (!(t > 0.0)) throw InvalidParams("talenti_norm: power must be positive");
  if (c.d * t <= c.N)
    throw DivergentNorm("talenti_norm: (N-2s) t <= N");
  return std::pow(c.c_Ns, t) * c.omega_N * 0.5 *
         beta_fn(c.N / 2.0, (c.d * t - c.N) / 2.0);
}

double c_ns(const DerivedConstants& c) { return c.c_Ns; }

double amplitude_residual(const DerivedConstants& c, const TransformPlan& plan,
                          double amplitude) {
  if (plan.N() != c.N) throw GridMismatch("amplitude_residual: plan dimension");
  const RadialGrid& g = *plan.grid;
  detail::TailPair tp;
  tp.refresh(plan, 1.0, c.d, c.s);
  Eigen::VectorXd u = amplitude * tp.T1;
  Eigen::Vector2d A = tp.fit(g, u);
  Eigen::VectorXd Lu =
      detail::ball_apply(plan, c.s, u) + A[0] * tp.D1 + A[1] * tp.D2;
  double num = 0.0, den = 0.0;
  double pc = c.two_star - 1.0;
  for (int i = 0; i < g.n; ++i) {
    double rhs = std::pow(u[i], pc);
    num += g.w[i] * (Lu[i] - rhs) * (Lu[i] - rhs);
    den += g.w[i] * rhs * rhs;
  }
  return std::sqrt(num / den);
}

double c_ns_verified(const DerivedConstants& c, const TransformPlan& plan) {
  double res = amplitude_residual(c, plan, c.c_Ns);
  if (!(res < 1e-6))
    throw OracleMismatch("bubble amplitude candidate fails the discrete equation");
  return c.c_Ns;
}

double rho0(const DerivedConstants& c) {
  double L = talenti_norm(2.0, c);  // throws DivergentNorm unless N > 4s
  double Q = talenti_norm(c.q, c);
  double a1 = c.N - c.q * c.d / 2.0;
  if (!(a1 > 0.0)) throw InvalidParams("rho0: q beyond the critical exponent");
  return std::pow(a1 * Q / (c.s * c.q * L), 1.0 / (2.0 * c.s - a1));
}

QG q_g(const DerivedConstants& c) {
  QG out;
  out.theta = (c.two_star - c.q) / (c.two_star - 2.0);
  out.Q = std::pow(out.theta, out.theta / (1.0 - out.theta));
  out.G = (1.0 - out.theta) * out.Q;
  return out;
}

double g0(double rho, const DerivedConstants& c) {
  if (!(rho > 0.0)) throw InvalidParams("g0: rho must be positive");
  double L = talenti_norm(2.0, c);
  double Q = talenti_norm(c.q, c);
  return std::pow(rho, c.N - c.q * c.d / 2.0) * Q / c.q -
         std::pow(rho, 2.0 * c.s) * L / 2.0;
}

ScalarFn psi_fn(const DerivedConstants& c) {
  double d = c.d;
  return ScalarFn{
      [d](double r) {
        return (1.0 - r * r) * std::pow(1.0 + r * r, -(d + 2.0) / 2.0);
      },
      d};
}

IdentityPair appendix_identity(double t, const DerivedConstants& c) {
  double norm_t = talenti_norm(t, c);  // DivergentNorm guards integrability
  ScalarFn psi = psi_fn(c);
  ScalarFn U = talenti(1.0, c);
  RadialGrid g = build_grid(c.N, 1e6, 400, GridKind::gauss_log);
  double acc = 0.0;
  for (int i = 0; i < g.n; ++i)
    acc += g.w[i] * psi(g.r[i]) * std::pow(U(g.r[i]), t - 1.0);
  IdentityPair out;
  out.lhs = c.omega_N * acc;
  out.rhs = (1.0 / c.c_Ns) * (-2.0 * c.N + c.d * t) / (c.d * t) * norm_t;
  return out;
}

}  // namespace fslab
