#include "fslab/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace fslab {

namespace {

using Eigen::Vector2d;
using Eigen::VectorXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// smooth radial cutoff profile: identically 1 below 1, identically 0 above 2
double fcut(double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; }
double eta_cut(double z) {
  if (z <= 1.0) return 1.0;
  if (z >= 2.0) return 0.0;
  double a = fcut(2.0 - z), b = fcut(z - 1.0);
  return a / (a + b);
}

// int_0^X (1+r^2)^{-expo/2} r^{N-1} dr, unit panel plus log panels
double core_moment(int N, double expo, double X) {
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double acc = 0;
  double up = std::min(X, 1.0);
  for (size_t i = 0; i < gx.size(); ++i) {
    double r = up * gx[i];
    acc += up * gw[i] * std::pow(1.0 + r * r, -expo / 2.0) *
           std::pow(r, N - 1);
  }
  if (X > 1.0) {
    double hi = std::log(X);
    int panels = std::max(2, (int)std::ceil(hi / 3.0));
    for (int p = 0; p < panels; ++p) {
      double a0 = hi * p / panels, b0 = hi * (p + 1) / panels;
      for (size_t i = 0; i < gx.size(); ++i) {
        double t = a0 + (b0 - a0) * gx[i];
        double r = std::exp(t);
        acc += (b0 - a0) * gw[i] * std::pow(1.0 + r * r, -expo / 2.0) *
               std::pow(r, N);
      }
    }
  }
  return acc;
}

// int_X^infty of the same integrand (decaying case expo > N)
double outer_moment(int N, double expo, double X) {
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double acc = 0;
  for (size_t i = 0; i < gx.size(); ++i) {
    double x = gx[i];
    if (x < 1e-12) continue;
    double r = X / x;
    acc += gw[i] * std::pow(1.0 + r * r, -expo / 2.0) * std::pow(r, N - 1) *
           X / (x * x);
  }
  return acc;
}

// transition-shell integral of f over z in [1,2]
template <class F>
double shell_int(F&& f) {
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double acc = 0;
  for (size_t i = 0; i < gx.size(); ++i) acc += gw[i] * f(1.0 + gx[i]);
  return acc;
}

// seminorm of the far cutoff profile h(z) = (1 - eta(z)) z^{-(N-2s)}, a pure
// shape constant; computed once per (N, s, n) on its own wide grid
double cutoff_shape_energy(int N, double s, int n) {
  static std::map<std::tuple<int, long long, int>, double> cache;
  auto key = std::make_tuple(N, (long long)std::llround(s * 1e12), n);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  double d = N - 2.0 * s;
  TransformPlan ph = build_plan(build_grid(N, 256.0, n), s);
  const RadialGrid& g = *ph.grid;
  VectorXd h(g.n);
  for (int i = 0; i < g.n; ++i) {
    double z = g.r[i];
    h[i] = (1.0 - eta_cut(z)) * std::pow(z, -d);
  }
  detail::TailPair th;
  th.refresh(ph, 1.0, d, s);
  // z^{-d} = T1 + (d/2) T2 + O(z^{-d-4}) beyond the cutoff
  Vector2d Ah(1.0, d / 2.0);
  VectorXd f = detail::ball_apply(ph, s, h) + Ah[0] * th.D1 + Ah[1] * th.D2;
  double acc = 0;
  for (int i = 0; i < g.n; ++i) acc += g.w[i] * h[i] * f[i];
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double tl = 0;
  for (size_t i = 0; i < gx.size(); ++i) {
    double x = gx[i];
    if (x < 1e-12) continue;
    double r = g.R / x, yy = 1.0 + r * r;
    double hm = Ah[0] * std::pow(yy, -d / 2.0) +
                Ah[1] * std::pow(yy, -(d + 2) / 2.0);
    double fm = Ah[0] * detail::philap(N, s, d, r) +
                Ah[1] * detail::philap(N, s, d + 2, r);
    tl += gw[i] * hm * fm * std::pow(r, N - 1) * g.R / (x * x);
  }
  double om = 2.0 * std::pow(M_PI, N / 2.0) / std::tgamma(N / 2.0);
  double H2 = om * (acc + tl);
  cache[key] = H2;
  return H2;
}

double slope_window_fit(const RadialGrid& g, const VectorXd& vals) {
  double lo = 0.55 * g.R, hi = 0.85 * g.R;
  double Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  int m = 0;
  for (int i = 0; i < g.n; ++i) {
    if (g.r[i] < lo || g.r[i] > hi) continue;
    if (!(vals[i] > 0))
      throw NonPositiveTail("profile is not positive on the slope window");
    double x = std::log(g.r[i]), y = std::log(vals[i]);
    Sx += x;
    Sy += y;
    Sxx += x * x;
    Sxy += x * y;
    ++m;
  }
  if (m < 4) throw InvalidParams("too few nodes in the tail slope window");
  return (m * Sxy - Sx * Sy) / (m * Sxx - Sx * Sx);
}

double quantity_of(const SweepRecord& r, SweepQuantity q) {
  switch (q) {
    case SweepQuantity::u0_peak:
      return r.u0_peak;
    case SweepQuantity::l2_sq:
      return r.l2_sq;
    case SweepQuantity::lq_q:
      return r.lq_q;
    case SweepQuantity::lp_p:
      return r.lp_p;
    case SweepQuantity::seminorm_sq:
      return r.seminorm_sq;
    case SweepQuantity::m_lambda:
      return r.m_lambda;
    case SweepQuantity::dist_sup:
      return r.dist_sup;
    case SweepQuantity::dist_seminorm:
      return r.dist_seminorm;
    case SweepQuantity::tau_gap:
      return r.tau - 1.0;
  }
  return kNaN;
}

}  // namespace

double tail_slope(const RadialProfile& u) {
  if (!u.grid || u.n() < 8) throw InvalidParams("profile too short");
  return slope_window_fit(*u.grid, u.vals);
}

LimitDistance limit_profile_distance(const TransformPlan& plan,
                                     const RadialProfile& v,
                                     const ScalarFn& reference,
                                     double ref_seminorm_sq, double s) {
  LimitDistance d;
  double sup = 0;
  for (int i = 0; i < v.n(); ++i)
    sup = std::max(sup, std::abs(v.value(i) - reference(v.node(i))));
  d.sup = sup;
  d.seminorm_gap = std::abs(ref_seminorm_sq - seminorm_sq(plan, v, s));
  return d;
}

Concentration extract_concentration(const RadialProfile& v,
                                    const DerivedConstants& c) {
  if (v.n() < 2) throw InvalidParams("profile too short");
  // even quadratic extrapolation of the peak from the first two nodes
  double r0 = v.node(0), r1 = v.node(1);
  double v0 = v.value(0), v1 = v.value(1);
  double peak = v0 + (v0 - v1) * r0 * r0 / (r1 * r1 - r0 * r0);
  if (!(peak > 0)) throw ZeroPeak("profile peak is not positive");
  double xi = std::pow(c.c_Ns / peak, 2.0 / c.d);
  Concentration out;
  out.xi = xi;
  out.w = v;
  out.w.r_scale = v.r_scale / xi;
  out.w.v_scale = v.v_scale * std::pow(xi, c.d / 2.0);
  return out;
}

Sweep sweep(const ProblemParams& base, const std::vector<double>& lambdas,
            const TransformPlan& plan, const SolverOptions& opts) {
  base.validate();
  if (lambdas.empty()) throw InvalidParams("sweep needs a schedule");
  for (size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] < lambdas[i - 1]))
      throw InvalidParams("sweep schedule must be strictly decreasing");
  DerivedConstants c = derive_constants(base);
  SolverOptions so = opts;
  so.form = SolveForm::original;
  Sweep sw;
  if (base.critical()) {
    bool lowdim = c.existence_case == ExistenceCase::critical_lowdim;
    sw.m0 = (c.s / c.N) * talenti_norm(c.two_star, c);
    ScalarFn ref;
    double ref_semi = 0;
    if (!lowdim) {
      ref = talenti(rho0(c), c);
      ref_semi = talenti_norm(c.two_star, c);
      sw.limit_peak = ref(0.0);
    } else {
      sw.limit_peak = kNaN;
    }
    std::vector<GroundState> sols = continuation_solve(base, plan, lambdas, so);
    for (const GroundState& gs : sols) {
      SweepRecord rec;
      rec.lambda = gs.params.lambda;
      rec.u0_peak = gs.profile.value(0);
      rec.l2_sq = gs.report.l2_sq;
      rec.lq_q = gs.report.lq_q;
      rec.lp_p = gs.report.lp_p;
      rec.seminorm_sq = gs.report.seminorm_sq;
      rec.m_lambda = gs.report.energy;
      RadialProfile v = rescale_u_to_v(gs.profile, gs.params);
      rec.tau = tau(plan, v, gs.params);
      if (!lowdim) {
        LimitDistance ld =
            limit_profile_distance(plan, v, ref, ref_semi, base.s);
        rec.dist_sup = ld.sup;
        rec.dist_seminorm = ld.seminorm_gap;
      } else {
        rec.dist_sup = kNaN;
        rec.dist_seminorm = kNaN;
      }
      rec.tail_slope = tail_slope(gs.profile);
      sw.records.push_back(rec);
    }
    sw.limit.lambda = 0.0;
    sw.limit.u0_peak = kNaN;
    sw.limit.l2_sq = kNaN;
    sw.limit.lq_q = kNaN;
    sw.limit.lp_p = kNaN;
    sw.limit.seminorm_sq = lowdim ? kNaN : ref_semi;
    sw.limit.m_lambda = sw.m0;
    sw.limit.dist_sup = 0.0;
    sw.limit.dist_seminorm = 0.0;
    sw.limit.tau = 1.0;
    sw.limit.tail_slope = -c.d;
    return sw;
  }
  // subcritical: the limit reference is the lambda = 0 ground state
  ProblemParams p0 = base;
  p0.lambda = 0.0;
  GroundState g0 = solve_ground_state(p0, plan, so);
  sw.m0 = g0.report.energy;
  sw.limit_peak = g0.profile.value(0);
  sw.limit.lambda = 0.0;
  sw.limit.u0_peak = g0.profile.value(0);
  sw.limit.l2_sq = g0.report.l2_sq;
  sw.limit.lq_q = g0.report.lq_q;
  sw.limit.lp_p = g0.report.lp_p;
  sw.limit.seminorm_sq = g0.report.seminorm_sq;
  sw.limit.m_lambda = g0.report.energy;
  sw.limit.dist_sup = 0.0;
  sw.limit.dist_seminorm = 0.0;
  sw.limit.tau = g0.report.seminorm_sq / g0.report.lcrit;
  sw.limit.tail_slope = tail_slope(g0.profile);
  SolverOptions sc = so;
  sc.continuation_from = g0;
  std::vector<GroundState> sols = continuation_solve(base, plan, lambdas, sc);
  for (const GroundState& gs : sols) {
    SweepRecord rec;
    rec.lambda = gs.params.lambda;
    rec.u0_peak = gs.profile.value(0);
    rec.l2_sq = gs.report.l2_sq;
    rec.lq_q = gs.report.lq_q;
    rec.lp_p = gs.report.lp_p;
    rec.seminorm_sq = gs.report.seminorm_sq;
    rec.m_lambda = gs.report.energy;
    double sup = 0;
    for (int i = 0; i < gs.profile.n(); ++i)
      sup = std::max(sup,
                     std::abs(gs.profile.vals[i] - g0.profile.vals[i]));
    rec.dist_sup = sup;
    rec.dist_seminorm =
        std::abs(g0.report.seminorm_sq - gs.report.seminorm_sq);
    rec.tau = gs.report.seminorm_sq / gs.report.lcrit;
    rec.tail_slope = tail_slope(gs.profile);
    sw.records.push_back(rec);
  }
  return sw;
}

ExponentFit fit_exponent(const Sweep& sweep, SweepQuantity quantity,
                         FitTransform transform) {
  const auto& recs = sweep.records;
  int m = (int)recs.size();
  int skip = m / 3;  // the scaling laws are asymptotic; drop the largest third
  std::vector<double> xs, ys;
  double lmin = 1e300, lmax = 0;
  double limit_q = quantity_of(sweep.limit, quantity);
  for (int k = skip; k < m; ++k) {
    double y = quantity_of(recs[k], quantity);
    if (transform == FitTransform::gap_from_limit) y = limit_q - y;
    ys.push_back(y);
    xs.push_back(std::log(recs[k].lambda));
    lmin = std::min(lmin, recs[k].lambda);
    lmax = std::max(lmax, recs[k].lambda);
  }
  if ((int)ys.size() < 4)
    throw NonPositiveData("fewer than 4 records in the fit window");
  bool all_pos = true, all_neg = true;
  for (double y : ys) {
    all_pos = all_pos && (y > 0);
    all_neg = all_neg && (y < 0);
  }
  if (!all_pos && !all_neg)
    throw NonPositiveData("quantity changes sign or vanishes on the window");
  double Sx = 0, Sy = 0, Sxx = 0, Sxy = 0, Syy = 0;
  int n = (int)ys.size();
  for (int k = 0; k < n; ++k) {
    double x = xs[k], y = std::log(std::abs(ys[k]));
    Sx += x;
    Sy += y;
    Sxx += x * x;
    Sxy += x * y;
    Syy += y * y;
  }
  ExponentFit f;
  f.slope = (n * Sxy - Sx * Sy) / (n * Sxx - Sx * Sx);
  f.intercept = (Sy - f.slope * Sx) / n;
  double ssr = Syy - Sy * Sy / n;
  double sse = ssr - f.slope * (Sxy - Sx * Sy / n);
  f.r_squared = ssr > 0 ? 1.0 - sse / ssr : 1.0;
  f.lambda_min = lmin;
  f.lambda_max = lmax;
  f.count = n;
  return f;
}

double lowdim_ell(const ProblemParams& params, double lambda, double M) {
  params.validate();
  double N = params.N, s = params.s;
  if (!(lambda > 0)) throw InvalidParams("lambda must be positive");
  if (std::abs(N - 4.0 * s) < 1e-9) return std::pow(lambda, -M);
  return M * std::pow(lambda, -2.0 / ((N - 2.0 * s) * params.q - 4.0 * s));
}

double lowdim_upper_bound(const ProblemParams& params, double ell,
                          const TransformPlan& plan) {
  params.validate();
  DerivedConstants c = derive_constants(params);
  if (!params.critical())
    throw InvalidRegime("the cutoff-family bound is for the critical case");
  if (c.N > 4.0 * c.s + 1e-12)
    throw InvalidRegime("the cutoff-family bound needs N <= 4s");
  if (!(c.q > 4.0 * c.s / c.d))
    throw InvalidRegime("the cutoff-family bound needs q > 4s/(N-2s)");
  if (!(ell > 2.0)) throw InvalidParams("cutoff scale must exceed 2");
  if (!(params.lambda > 0)) throw InvalidParams("lambda must be positive");
  const int N = c.N;
  const double s = c.s, d = c.d, q = c.q, ts = c.two_star;
  const double om = c.omega_N, cn = c.c_Ns;
  const double e2 = ell * ell;
  const double H2 = cutoff_shape_energy(N, s, plan.n());
  // every norm of eta_ell U splits into a closed core below ell plus a
  // one-dimensional transition-shell integral on [ell, 2 ell]
  double I2 =
      om * cn * cn *
      (core_moment(N, 2.0 * d, ell) + shell_int([&](double z) {
         double e = eta_cut(z);
         return e * e * std::pow(ell, N) * std::pow(z, N - 1) *
                std::pow(1.0 + e2 * z * z, -d);
       }));
  double Iq =
      om * std::pow(cn, q) *
      (core_moment(N, q * d, ell) + shell_int([&](double z) {
         double e = eta_cut(z);
         return std::pow(e, q) * std::pow(ell, N) * std::pow(z, N - 1) *
                std::pow(1.0 + e2 * z * z, -q * d / 2.0);
       }));
  double Its =
      om * std::pow(cn, ts) *
      (core_moment(N, 2.0 * N, ell) + shell_int([&](double z) {
         double e = eta_cut(z);
         return std::pow(e, ts) * std::pow(ell, N) * std::pow(z, N - 1) *
                std::pow(1.0 + e2 * z * z, -(double)N);
       }));
  // seminorm: [eta U]^2 = [U]^2 - 2 <U^{2*-1}, (1-eta) U> + [(1-eta) U]^2,
  // the far part being the fixed shape energy at scale ell
  double CR =
      om * std::pow(cn, ts) *
      (outer_moment(N, 2.0 * N, 2.0 * ell) + shell_int([&](double z) {
         double e = eta_cut(z);
         return (1.0 - e) * std::pow(ell, N) * std::pow(z, N - 1) *
                std::pow(1.0 + e2 * z * z, -(double)N);
       }));
  double I1 = talenti_norm(ts, c) + cn * cn * std::pow(ell, 2.0 * s - N) * H2 -
              2.0 * CR;
  // best concentration of the reduced two-term energy of the cutoff family
  double rho1 = std::pow(2.0 * (ts - q) / (q * (ts - 2.0)) * Iq / I2,
                         2.0 / (d * (q - 2.0)));
  double phi1 = std::pow(rho1, N - q * d / 2.0) * Iq / q -
                0.5 * std::pow(rho1, 2.0 * s) * I2;
  double btil = Its / ts + std::pow(params.lambda, c.sigma) * phi1;
  if (!(btil > 0)) return std::numeric_limits<double>::infinity();
  // sup over t of (t^d / 2) I1 - t^N btil
  double tstar = std::pow(d * I1 / (2.0 * N * btil), 1.0 / (2.0 * s));
  return 0.5 * std::pow(tstar, d) * I1 - std::pow(tstar, N) * btil;
}

}  // namespace fslab
