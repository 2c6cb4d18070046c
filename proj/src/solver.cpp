#include "fslab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace fslab {

namespace {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

double dotw(const RadialGrid& g, const VectorXd& x, const VectorXd& y) {
  double t = 0;
  for (int i = 0; i < g.n; ++i) t += g.w[i] * x[i] * y[i];
  return t;
}

double bubble_amp(const DerivedConstants& c, double rho) {
  return c.c_Ns * std::pow(rho, -c.d / 2.0);
}

// t-th moment of the two-term tail model beyond R, template center rho
double model_tail_t(const RadialGrid& g, double beta, const Vector2d& A,
                    double t, double rho) {
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double tl = 0;
  for (size_t i = 0; i < gx.size(); ++i) {
    double x = gx[i];
    if (x < 1e-12) continue;
    double r = g.R / x, y = r / rho, yy = 1.0 + y * y;
    double vm = A[0] * std::pow(yy, -beta / 2.0) +
                A[1] * std::pow(yy, -(beta + 2) / 2.0);
    tl += gw[i] * std::pow(std::abs(vm), t) * std::pow(r, g.N - 1) * g.R /
          (x * x);
  }
  return tl;
}

// ------------------------------------------------------------------
// rescaled critical problem  L v + m2 v = v^{2*-1} + mq v^{q-1}.
// Both mass coefficients are lambda^sigma in the standard gauge; boundary
// dimension runs keep the profile at grid scale instead, which splits them
// (see lowdim_step). Inner stage: damped dense Newton with the bubble-family
// direction deflated through a bordered row, so the nearly singular dilation
// mode cannot swallow the step. Outer stage: a Newton iteration in the family
// coordinate itself plus template re-centering (coord_mode 0), or the
// coordinate held at rho_pin (coord_mode 1) when the mass terms are too
// small to determine it from the deflated slice.
// ------------------------------------------------------------------

struct CritOut {
  VectorXd v;
  double rho = 1.0;
  int iters = 0;
  double res = 0.0;
  Vector2d A{0, 0};
};

CritOut solve_crit(const TransformPlan& plan, const MatrixXd& Lmat,
                   const DerivedConstants& c, double m2, double mq, VectorXd v,
                   double rho_state, double rho_pin, int coord_mode,
                   double damping, double tol, int maxpass, bool trace) {
  const RadialGrid& g = *plan.grid;
  const int n = g.n;
  const double s = c.s, ts = c.two_star, d = c.d, q = c.q;
  const double a = std::max(m2, 1e-14);
  detail::TailPair tc;
  tc.refresh(plan, rho_state, d, s);
  VectorXd psi, Lpsi;
  auto make_psi = [&]() {
    double A1b = bubble_amp(c, tc.rho);
    psi = A1b * ((d / 2.0) * tc.T1 - d * tc.T2);
    Lpsi = A1b * ((d / 2.0) * tc.P1 - d * tc.P2);
  };
  make_psi();
  if (coord_mode == 1 && std::abs(rho_pin / rho_state - 1.0) > 1e-15) {
    v += (rho_pin / rho_state - 1.0) * psi;
    tc.refresh(plan, rho_pin, d, s);
    make_psi();
  }
  Vector2d Acur = tc.fit(g, v);
  auto Fres = [&](const VectorXd& u, VectorXd& Nu) {
    Nu.resize(n);
    for (int i = 0; i < n; ++i) {
      double ui = std::max(u[i], 0.0);
      Nu[i] = std::pow(ui, ts - 1.0) + mq * std::pow(ui, q - 1.0);
    }
    VectorXd F = Lmat * u + Acur[0] * tc.D1 + Acur[1] * tc.D2 + m2 * u - Nu;
    return F;
  };
  double res = 1e30;
  int iters = 0;
  MatrixXd K(n + 1, n + 1);
  VectorXd rhs(n + 1), Nv;
  for (int pass = 0; pass < maxpass; ++pass) {
    // damped Newton on the amplitude-frozen system, family mode deflated
    for (int nit = 0; nit < 40; ++nit) {
      VectorXd F = Fres(v, Nv);
      double nF = std::sqrt(dotw(g, F, F)), nN = std::sqrt(dotw(g, Nv, Nv));
      res = nF / nN;
      ++iters;
      if (trace)
        std::fprintf(stderr, "    pass=%d nit=%2d res=%.3e v0=%.6f rho=%.9f\n",
                     pass, nit, res, v[0], tc.rho);
      if (res < tol || !std::isfinite(res)) break;
      // symmetrized via the sqrt(w) similarity; border z = (L + a) psi keeps
      // the step off the soft dilation direction
      VectorXd z = Lpsi + a * psi;
      for (int i = 0; i < n; ++i) {
        double ui = std::max(v[i], 0.0);
        double np = (ts - 1.0) * std::pow(ui, ts - 2.0) +
                    mq * (q - 1.0) * std::pow(ui, q - 2.0);
        double si = std::sqrt(g.w[i]);
        for (int j = 0; j < n; ++j)
          K(i, j) = si * Lmat(i, j) / std::sqrt(g.w[j]);
        K(i, i) += m2 - np;
        K(i, n) = K(n, i) = si * z[i];
        rhs[i] = -si * F[i];
      }
      K(n, n) = 0.0;
      rhs[n] = 0.0;
      VectorXd sol = Eigen::LDLT<MatrixXd>(K).solve(rhs);
      VectorXd dv(n);
      for (int i = 0; i < n; ++i) dv[i] = sol[i] / std::sqrt(g.w[i]);
      if (!dv.allFinite()) break;
      double alpha = damping, bestA = -1, bestR = res;
      VectorXd vtry, Nt;
      for (int ls = 0; ls < 6; ++ls) {
        vtry = v + alpha * dv;
        for (int i = 0; i < n; ++i) vtry[i] = std::max(vtry[i], 0.0);
        VectorXd Ft = Fres(vtry, Nt);
        double rt = std::sqrt(dotw(g, Ft, Ft)) /
                    std::max(std::sqrt(dotw(g, Nt, Nt)), 1e-300);
        if (rt < bestR) {
          bestR = rt;
          bestA = alpha;
        }
        if (rt < 0.5 * res) break;
        alpha *= 0.5;
      }
      if (bestA < 0) break;  // no improvement at any step length
      v += bestA * dv;
      for (int i = 0; i < n; ++i) v[i] = std::max(v[i], 0.0);
    }
    // outer Newton in the family coordinate on the residual the deflated
    // slice leaves behind (exactly -mu*z at convergence). Acur must stay
    // the amplitudes the inner loop used.
    bool moved = false;
    if (coord_mode == 0 && res < 1e-2 * std::max(m2, mq)) {
      VectorXd F = Fres(v, Nv);
      double num = 0, den = 0;
      for (int i = 0; i < n; ++i) {
        double ui = std::max(v[i], 0.0);
        double np = (ts - 1.0) * std::pow(ui, ts - 2.0) +
                    mq * (q - 1.0) * std::pow(ui, q - 2.0);
        num += g.w[i] * F[i] * psi[i];
        den += g.w[i] * (Lpsi[i] + m2 * psi[i] - np * psi[i]) * psi[i];
      }
      {
        // the compensation D*fit(.) is not w-self-adjoint: pairing the ball
        // operator of the state against psi picks up -A1b<w,(d/2)D1 - d D2>
        // relative to the physical pairing on the out-of-span part; undo it
        double A1b = bubble_amp(c, tc.rho);
        double c1 = 0, c2 = 0;
        for (int i = 0; i < n; ++i) {
          double wt = v[i] - Acur[0] * tc.T1[i] - Acur[1] * tc.T2[i];
          c1 += g.w[i] * wt * tc.D1[i];
          c2 += g.w[i] * wt * tc.D2[i];
        }
        num += A1b * ((d / 2.0) * c1 - d * c2);
      }
      {
        // model completion of the force pairing beyond R: the grid sum
        // misses the slowly decaying mass-term tails, which would displace
        // the equilibrium dilation by a mass-independent few percent
        std::vector<double> gx, gw;
        detail::gl32(gx, gw);
        double rr = tc.rho, is2 = std::pow(rr, -2.0 * s);
        double A1b = bubble_amp(c, rr);
        for (size_t i = 0; i < gx.size(); ++i) {
          double x = gx[i];
          if (x < 1e-12) continue;
          double r = g.R / x, y = r / rr, yy = 1.0 + y * y;
          double T1v = std::pow(yy, -d / 2.0);
          double T2v = std::pow(yy, -(d + 2) / 2.0);
          double vm = std::max(Acur[0] * T1v + Acur[1] * T2v, 0.0);
          double fm = is2 * (Acur[0] * detail::philap(g.N, s, d, y) +
                             Acur[1] * detail::philap(g.N, s, d + 2, y));
          double pm = A1b * ((d / 2.0) * T1v - d * T2v);
          double Fm = fm + m2 * vm - std::pow(vm, ts - 1.0) -
                      mq * std::pow(vm, q - 1.0);
          num += gw[i] * Fm * pm * std::pow(r, g.N - 1) * g.R / (x * x);
        }
      }
      double gam = -num / den;
      if (std::isfinite(gam)) {
        if (std::abs(gam) > 0.03) gam = (gam > 0 ? 0.03 : -0.03);
        v += gam * psi;
        for (int i = 0; i < n; ++i) v[i] = std::max(v[i], 0.0);
        if (std::abs(gam) > 1e-13) moved = true;
      }
      if (trace)
        std::fprintf(stderr, "    coord newton: num=%.3e den=%.3e\n", num,
                     den);
    }
    // re-fit compensation amplitudes to the (possibly moved) state, then
    // re-center templates so A2 stays ~0 and psi tracks the state's dilation
    Vector2d An = tc.fit(g, v);
    double dA = (An - Acur).norm() / (1.0 + Acur.norm());
    Acur = An;
    if (coord_mode == 0) {
      double eps = (Acur[0] != 0.0 && std::isfinite(Acur[1] / Acur[0]))
                       ? -Acur[1] / (Acur[0] * d)
                       : 0.0;
      eps = std::max(-0.05, std::min(0.05, eps));
      if (std::abs(eps) > 1e-10) {
        tc.refresh(plan, tc.rho * (1.0 + eps), d, s);
        make_psi();
        Acur = tc.fit(g, v);
        moved = true;
      }
    }
    {
      VectorXd F = Fres(v, Nv);
      res = std::sqrt(dotw(g, F, F)) / std::sqrt(dotw(g, Nv, Nv));
    }
    if (res < tol && dA < 1e-11 && !moved) break;
  }
  {
    VectorXd F = Fres(v, Nv);
    res = std::sqrt(dotw(g, F, F)) / std::sqrt(dotw(g, Nv, Nv));
  }
  CritOut o;
  o.v = v;
  o.rho = tc.rho;
  o.iters = iters;
  o.res = res;
  o.A = Acur;
  return o;
}

// continuation context for the critical family: state, template center, and
// the (mass, rho) pairs that extrapolate the coordinate into the pinned range
struct CritChain {
  VectorXd v;
  double rho_state = 0.0;
  std::vector<std::pair<double, double>> model_pts;
  bool live = false;
};

constexpr double kPinMass = 1e-5;   // below this the dilation mode is pinned
constexpr double kBootMass = 1e-4;  // bootstrap chain anchors here

double pin_from_model(const CritChain& ch, double mass) {
  double Sm = 0, Sr = 0, Smm = 0, Smr = 0;
  int M = (int)ch.model_pts.size();
  for (auto& pr : ch.model_pts) {
    Sm += pr.first;
    Sr += pr.second;
    Smm += pr.first * pr.first;
    Smr += pr.first * pr.second;
  }
  double r1 = (M * Smr - Sm * Sr) / (M * Smm - Sm * Sm);
  double r0 = (Sr - r1 * Sm) / M;
  return r0 + r1 * mass;
}

void seed_bubble(CritChain& ch, const TransformPlan& plan,
                 const DerivedConstants& c, double rho) {
  ScalarFn U = talenti(rho, c);
  ch.v.resize(plan.n());
  for (int i = 0; i < plan.n(); ++i) ch.v[i] = U(plan.grid->r[i]);
  ch.rho_state = rho;
  ch.live = true;
}

// one converged solve at mass = lambda^sigma, bootstrapping a short 0.25-dex
// chain first when the target sits in the pinned regime with no model points
CritOut critical_step(const TransformPlan& plan, const MatrixXd& Lmat,
                      const DerivedConstants& c, double lambda,
                      const SolverOptions& opts, CritChain& ch) {
  double mass = std::pow(lambda, c.sigma);
  double tol = std::min(opts.tol_residual, 1e-10);
  if (!ch.live) seed_bubble(ch, plan, c, rho0(c));
  if (mass < kPinMass && ch.model_pts.size() < 2) {
    double lam_hi = std::pow(kBootMass, 1.0 / c.sigma);
    int steps =
        (int)std::ceil((std::log10(lam_hi) - std::log10(lambda)) / 0.25) + 1;
    for (int k = 0; k < steps; ++k) {
      double lam_k = std::pow(10.0, std::log10(lam_hi) - 0.25 * k);
      double mk = std::pow(lam_k, c.sigma);
      if (lam_k <= lambda * (1.0 + 1e-12) || mk < kPinMass) break;
      CritOut o =
          solve_crit(plan, Lmat, c, mk, mk, ch.v, ch.rho_state, ch.rho_state,
                     0, opts.damping, tol, 8, opts.trace);
      ch.v = o.v;
      ch.rho_state = o.rho;
      ch.model_pts.push_back({mk, o.rho});
    }
  }
  int mode = (mass >= kPinMass) ? 0 : 1;
  double rho_pin = ch.rho_state;
  if (mode == 1 && ch.model_pts.size() >= 2) rho_pin = pin_from_model(ch, mass);
  CritOut o = solve_crit(plan, Lmat, c, mass, mass, ch.v, ch.rho_state,
                         rho_pin, mode, opts.damping, tol, 8, opts.trace);
  ch.v = o.v;
  ch.rho_state = o.rho;
  if (mode == 0) ch.model_pts.push_back({mass, o.rho});
  return o;
}

// ------------------------------------------------------------------
// boundary dimension N <= 4s: the concentration scale collapses with lambda,
// so the solve runs in a dilation gauge that keeps the profile at grid scale.
// Writing v(x) = rho_eq^{-d/2} w(x / rho_eq) turns the rescaled equation into
// the same form with masses m2 = lambda^sigma rho_eq^{2s} and
// mq = lambda^sigma rho_eq^{N - q d / 2}.
// ------------------------------------------------------------------

struct LowChain {
  VectorXd v;
  double rho_eq = 0.0;     // gauge scale, fixed along a schedule
  double rho_state = 0.0;  // template center in gauge units
  bool live = false;
};

// equilibrium concentration of the reduced two-term energy. At N = 4s the
// mass integral grows logarithmically and is cut at the resolvent crossover
// lambda^{-1/s}, giving a fixed-point map for xi; away from the boundary the
// clamped map is only a seed and the measured re-pin does the rest.
double lowdim_xi(const DerivedConstants& c, double lambda) {
  double a1 = c.N - c.q * c.d / 2.0;
  double nq = talenti_norm(c.q, c);
  double coef = a1 * nq / (c.q * c.s * c.omega_N * c.c_Ns * c.c_Ns);
  double xi = 1e-3;
  for (int it = 0; it < 60; ++it) {
    double ln = std::log(std::pow(lambda, -1.0 / c.s) / xi);
    if (!(ln > 1.0)) ln = 1.0;
    xi = std::pow(coef / ln, 1.0 / (2.0 * c.s - a1));
  }
  return xi;
}

// concentration measured from the first node of the gauge profile
double measure_xi(const RadialGrid& g, const DerivedConstants& c,
                  const VectorXd& w) {
  double x = std::pow(w[0] / c.c_Ns, -2.0 / c.d);
  return x - g.r[0] * g.r[0] / x;
}

// mass moment of the tail model cut at the crossover Ym, log-scale panels
double capped_tail_2(const RadialGrid& g, const DerivedConstants& c,
                     const Vector2d& A, double rho, double m2) {
  if (!(m2 > 0)) return 0.0;
  double Ym = std::max(std::pow(m2, -1.0 / (2.0 * c.s)), g.R);
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double t2 = 0, lo = std::log(g.R), hi = std::log(Ym);
  for (int panel = 0; panel < 2; ++panel) {
    double a0 = lo + 0.5 * (hi - lo) * panel, b0 = a0 + 0.5 * (hi - lo);
    for (size_t i = 0; i < gx.size(); ++i) {
      double t = a0 + (b0 - a0) * gx[i];
      double r = std::exp(t), y = r / rho, yy = 1.0 + y * y;
      double vm = A[0] * std::pow(yy, -c.d / 2.0) +
                  A[1] * std::pow(yy, -(c.d + 2) / 2.0);
      t2 += (b0 - a0) * gw[i] * vm * vm * std::pow(r, g.N);
    }
  }
  return t2;
}

// seminorm recipe for the gauge state: grid pairing against the compensated
// operator plus equation-model tails beyond R. The t = 2 moment decays like
// the (log-divergent at N = 4s) bubble tail, so it is cut at the crossover
// radius Ym = m2^{-1/(2s)} where the true profile leaves the algebraic model.
double semi_low(const TransformPlan& plan, const detail::TailPair& tc,
                const DerivedConstants& c, const VectorXd& v,
                const Vector2d& A, double m2, double mq) {
  const RadialGrid& g = *plan.grid;
  VectorXd f = detail::ball_apply(plan, c.s, v) + A[0] * tc.D1 + A[1] * tc.D2;
  double acc = 0;
  for (int i = 0; i < g.n; ++i) acc += g.w[i] * v[i] * f[i];
  std::vector<double> gx, gw;
  detail::gl32(gx, gw);
  double ts = c.two_star, d = c.d, rr = tc.rho, t34 = 0;
  for (size_t i = 0; i < gx.size(); ++i) {
    double x = gx[i];
    if (x < 1e-12) continue;
    double r = g.R / x, y = r / rr, yy = 1.0 + y * y;
    double vm = std::max(
        A[0] * std::pow(yy, -d / 2.0) + A[1] * std::pow(yy, -(d + 2) / 2.0),
        0.0);
    t34 += gw[i] * (std::pow(vm, ts - 1.0) + mq * std::pow(vm, c.q - 1.0)) *
           vm * std::pow(r, g.N - 1) * g.R / (x * x);
  }
  double t2 = capped_tail_2(g, c, A, rr, m2);
  return c.omega_N * (acc + t34 - m2 * t2);
}

struct LowOut {
  VectorXd v;
  double rho = 1.0;     // template center, gauge units
  double xi_w = 1.0;    // measured concentration, gauge units
  double m_lambda = 0;  // bias-cancelled level
  int iters = 0;
  double res = 0.0;
  Vector2d A{0, 0};
};

LowOut lowdim_step(const TransformPlan& plan, const MatrixXd& Lmat,
                   const DerivedConstants& c, double lambda,
                   const SolverOptions& opts, LowChain& ch) {
  const RadialGrid& g = *plan.grid;
  double mass = std::pow(lambda, c.sigma);
  double m2 = mass * std::pow(ch.rho_eq, 2.0 * c.s);
  double mq = mass * std::pow(ch.rho_eq, c.N - c.q * c.d / 2.0);
  double tol = std::min(opts.tol_residual, 1e-10);
  double xi_g = lowdim_xi(c, lambda) / ch.rho_eq;
  if (!ch.live) {
    ch.v.resize(g.n);
    for (int i = 0; i < g.n; ++i) {
      double y = g.r[i] / xi_g;
      ch.v[i] = bubble_amp(c, xi_g) * std::pow(1.0 + y * y, -c.d / 2.0);
    }
    ch.rho_state = xi_g;
    ch.live = true;
  }
  CritOut o = solve_crit(plan, Lmat, c, m2, mq, ch.v, ch.rho_state, xi_g, 1,
                         opts.damping, tol, 6, opts.trace);
  // re-pin once at the measured concentration
  double xiw = measure_xi(g, c, o.v);
  CritOut o2 = solve_crit(plan, Lmat, c, m2, mq, o.v, xiw, xiw, 1,
                          opts.damping, tol, 6, opts.trace);
  xiw = measure_xi(g, c, o2.v);
  ch.v = o2.v;
  ch.rho_state = o2.rho;
  // bias-cancelled level: the same seminorm recipe on the state and on the
  // sampled bubble at the same template center; the recipe bias cancels in
  // the difference and the bubble level enters in closed form
  detail::TailPair tc;
  tc.refresh(plan, o2.rho, c.d, c.s);
  VectorXd Ub(g.n);
  for (int i = 0; i < g.n; ++i) {
    double y = g.r[i] / o2.rho;
    Ub[i] = bubble_amp(c, o2.rho) * std::pow(1.0 + y * y, -c.d / 2.0);
  }
  Vector2d Abub = tc.fit(g, Ub);
  double rep_v = semi_low(plan, tc, c, o2.v, o2.A, m2, mq);
  double rep_b = semi_low(plan, tc, c, Ub, Abub, 0.0, 0.0);
  LowOut lo;
  lo.m_lambda = (c.s / c.N) * (talenti_norm(c.two_star, c) + rep_v - rep_b);
  lo.v = o2.v;
  lo.rho = o2.rho;
  lo.xi_w = xiw;
  lo.iters = o.iters + o2.iters;
  lo.res = o2.res;
  lo.A = o2.A;
  return lo;
}

// ------------------------------------------------------------------
// subcritical (and lambda = 0 limit) problem in original variables:
// L u + u = u^{p-1} + lambda u^{q-1}, tail exponent N + 2s.
// ------------------------------------------------------------------

struct SubOut {
  VectorXd u;
  int iters = 0;
  double res = 0.0;
  Vector2d A{0, 0};
};

// window-fit rows as an explicit linear map, needed by the Jacobian
struct WindowMap {
  int i0 = 0, i1 = 0;
  MatrixXd fitP;  // 2 x (i1-i0), acting on u/T1 window samples
};

WindowMap window_map(const RadialGrid& g, const detail::TailPair& tc) {
  WindowMap wm;
  for (int i = 0; i < g.n; ++i) {
    if (g.r[i] < 0.5 * g.R) wm.i0 = i + 1;
    if (g.r[i] <= 0.9 * g.R) wm.i1 = i + 1;
  }
  int m = wm.i1 - wm.i0;
  MatrixXd X(m, 2);
  for (int i = 0; i < m; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = tc.T2[wm.i0 + i] / tc.T1[wm.i0 + i];
  }
  wm.fitP = (X.transpose() * X).inverse() * X.transpose();
  return wm;
}

Vector2d window_fit(const WindowMap& wm, const detail::TailPair& tc,
                    const VectorXd& u) {
  int m = wm.i1 - wm.i0;
  VectorXd y(m);
  for (int i = 0; i < m; ++i) y[i] = u[wm.i0 + i] / tc.T1[wm.i0 + i];
  return wm.fitP * y;
}

// stabilized resolvent (Picard) iteration: each step applies the resolvent
// to the current force and renormalizes through the energy quotient
// (a/b)^gamma, which contracts toward the ground state from a one-bump seed.
// Warm-start stage before Newton; carries the documented stall contract.
VectorXd picard_stage(const TransformPlan& plan, const ProblemParams& params,
                      VectorXd u, double damping, int maxit, int& used,
                      bool trace) {
  const RadialGrid& g = *plan.grid;
  const int n = g.n;
  const double s = params.s, p = params.p, q = params.q, lam = params.lambda;
  VectorXd rfac(n);
  for (int k = 0; k < n; ++k)
    rfac[k] = 1.0 / (std::pow(plan.rho[k], 2.0 * s) + 1.0);
  const double gam = (p - 1.0) / (p - 2.0);
  double best = 1e300;
  int since_improve = 0;
  bool halved = false;
  used = 0;
  for (int it = 0; it < maxit; ++it) {
    ++used;
    VectorXd Nu(n);
    for (int i = 0; i < n; ++i) {
      double av = std::abs(u[i]);
      Nu[i] = (std::pow(av, p - 2.0) + lam * std::pow(av, q - 2.0)) * u[i];
    }
    VectorXd Lu = detail::ball_apply(plan, s, u);
    double a = dotw(g, u, Lu) + dotw(g, u, u);
    double b = dotw(g, Nu, u);
    if (!(b > 0) || u.lpNorm<Eigen::Infinity>() < 1e-12)
      throw CollapseToZero("resolvent stage drove the profile to zero");
    VectorXd F = Lu + u - Nu;
    double res = std::sqrt(dotw(g, F, F)) /
                 std::max(std::sqrt(dotw(g, u, u)), 1e-300);
    if (trace)
      std::fprintf(stderr, "  picard it=%3d res=%.3e u0=%.6f\n", it, res,
                   u[0]);
    // stall contract: no 1% progress over 50 iterations halves the damping
    // once; a second stall is a divergence
    if (res < 0.99 * best) {
      best = res;
      since_improve = 0;
    } else if (++since_improve >= 50) {
      if (halved) throw Diverged("resolvent stage stalled twice");
      damping *= 0.5;
      halved = true;
      since_improve = 0;
    }
    VectorXd y = plan.B * rfac.cwiseProduct(plan.F * Nu).matrix();
    VectorXd un = std::pow(a / b, gam) * y;
    double step = std::sqrt(dotw(g, un - u, un - u)) /
                  std::max(std::sqrt(dotw(g, u, u)), 1e-300);
    u += damping * (un - u);
    if (step < 1e-9) break;
  }
  return u;
}

// augmented Newton in (u, A1, A2): the compensation amplitudes are unknowns
// tied to the state by the window-fit rows, so tail model and profile
// converge together instead of ping-ponging through refits
SubOut solve_sub(const TransformPlan& plan, const MatrixXd& Lmat,
                 const detail::TailPair& tc, const WindowMap& wm,
                 const ProblemParams& params, VectorXd u, double damping,
                 double tol, int maxit) {
  const RadialGrid& g = *plan.grid;
  const int n = g.n;
  const double pp = params.p, q = params.q, lam = params.lambda;
  Vector2d A = window_fit(wm, tc, u);
  auto Fres = [&](const VectorXd& x, const Vector2d& Ax, VectorXd& Nx) {
    Nx.resize(n);
    for (int i = 0; i < n; ++i) {
      double av = std::abs(x[i]);
      Nx[i] = (std::pow(av, pp - 2.0) + lam * std::pow(av, q - 2.0)) * x[i];
    }
    VectorXd F(n + 2);
    F.head(n) = Lmat * x + Ax[0] * tc.D1 + Ax[1] * tc.D2 + x - Nx;
    Vector2d Af = window_fit(wm, tc, x);
    F[n] = Ax[0] - Af[0];
    F[n + 1] = Ax[1] - Af[1];
    return F;
  };
  auto fnorm = [&](const VectorXd& F) {
    double t = 0;
    for (int i = 0; i < n; ++i) t += g.w[i] * F[i] * F[i];
    return std::sqrt(t + F[n] * F[n] + F[n + 1] * F[n + 1]);
  };
  MatrixXd K(n + 2, n + 2);
  VectorXd Nu;
  double res = 1e30;
  int it = 0;
  for (; it < maxit; ++it) {
    VectorXd F = Fres(u, A, Nu);
    res = fnorm(F) / std::max(1.0, std::sqrt(dotw(g, u, u)));
    if (res < tol || !std::isfinite(res)) break;
    K.setZero();
    K.topLeftCorner(n, n) = Lmat;
    for (int i = 0; i < n; ++i) {
      double ui = std::abs(u[i]);
      double np = (pp - 1.0) * std::pow(ui, pp - 2.0) +
                  lam * (q - 1.0) * std::pow(ui, q - 2.0);
      K(i, i) += 1.0 - np;
      K(i, n) = tc.D1[i];
      K(i, n + 1) = tc.D2[i];
    }
    for (int i = wm.i0; i < wm.i1; ++i) {
      K(n, i) = -wm.fitP(0, i - wm.i0) / tc.T1[i];
      K(n + 1, i) = -wm.fitP(1, i - wm.i0) / tc.T1[i];
    }
    K(n, n) = 1.0;
    K(n + 1, n + 1) = 1.0;
    VectorXd sol = Eigen::PartialPivLU<MatrixXd>(K).solve(-F);
    if (!sol.allFinite()) break;
    double alpha = damping, bestA = -1, bestR = res;
    VectorXd Nt;
    for (int ls = 0; ls < 8; ++ls) {
      VectorXd vtry = u + alpha * sol.head(n);
      Vector2d Atry(A[0] + alpha * sol[n], A[1] + alpha * sol[n + 1]);
      VectorXd Ft = Fres(vtry, Atry, Nt);
      double rt = fnorm(Ft) / std::max(1.0, std::sqrt(dotw(g, vtry, vtry)));
      if (rt < bestR) {
        bestR = rt;
        bestA = alpha;
      }
      if (rt < 0.5 * res) break;
      alpha *= 0.5;
    }
    if (bestA < 0) break;
    u += bestA * sol.head(n);
    A[0] += bestA * sol[n];
    A[1] += bestA * sol[n + 1];
  }
  SubOut o;
  o.u = u;
  o.iters = it;
  o.res = res;
  o.A = A;
  return o;
}

// norms and defects of the subcritical state. The seminorm tail uses the
// equation itself ((-D)^s u = -u + u^{p-1} + lambda u^{q-1} beyond R): the
// nonlocal image of the interior bulk is the same order as the tail there,
// so a direct operator model of the templates would be wrong at the order
// these defects are reported.
EnergyReport sub_report(const TransformPlan& plan, const detail::TailPair& tc,
                        const VectorXd& u, const Vector2d& A,
                        const ProblemParams& params) {
  const RadialGrid& g = *plan.grid;
  const double pp = params.p, q = params.q, lam = params.lambda;
  const double s = params.s, d = g.N - 2.0 * s, dt = g.N + 2.0 * s;
  const double ts = params.two_star();
  const double om = 2.0 * std::pow(M_PI, g.N / 2.0) / std::tgamma(g.N / 2.0);
  double g2 = 0, gp = 0, gq = 0, gc = 0;
  for (int i = 0; i < g.n; ++i) {
    double av = std::abs(u[i]);
    g2 += g.w[i] * av * av;
    gp += g.w[i] * std::pow(av, pp);
    gq += g.w[i] * std::pow(av, q);
    gc += g.w[i] * std::pow(av, ts);
  }
  EnergyReport r;
  r.l2_sq = om * (g2 + model_tail_t(g, dt, A, 2.0, 1.0));
  r.lp_p = om * (gp + model_tail_t(g, dt, A, pp, 1.0));
  r.lq_q = om * (gq + model_tail_t(g, dt, A, q, 1.0));
  r.lcrit = om * (gc + model_tail_t(g, dt, A, ts, 1.0));
  VectorXd Lu = detail::ball_apply(plan, s, u) + A[0] * tc.D1 + A[1] * tc.D2;
  double gsum = 0;
  for (int i = 0; i < g.n; ++i) gsum += g.w[i] * Lu[i] * u[i];
  double tail_semi = -model_tail_t(g, dt, A, 2.0, 1.0) +
                     model_tail_t(g, dt, A, pp, 1.0) +
                     lam * model_tail_t(g, dt, A, q, 1.0);
  r.seminorm_sq = om * (gsum + tail_semi);
  r.tag = EnergyTag::I;
  r.energy = 0.5 * (r.seminorm_sq + r.l2_sq) - r.lp_p / pp - lam * r.lq_q / q;
  double neh = r.seminorm_sq + r.l2_sq - r.lp_p - lam * r.lq_q;
  r.nehari_residual = std::abs(neh) / (r.seminorm_sq + r.l2_sq);
  double poh = (d / 2.0) * r.seminorm_sq + (g.N / 2.0) * r.l2_sq -
               (g.N / pp) * r.lp_p - lam * (g.N / q) * r.lq_q;
  r.pohozaev_residual =
      std::abs(poh) / ((d / 2.0) * r.seminorm_sq + (g.N / 2.0) * r.l2_sq);
  return r;
}

// ------------------------------------------------------------------
// packing into the public GroundState
// ------------------------------------------------------------------

void check_quality(double res, double tol, double lambda) {
  if (!(res < std::max(1e3 * tol, 1e-6)))
    throw Diverged("residual " + std::to_string(res) +
                   " stuck above tolerance at lambda = " +
                   std::to_string(lambda));
}

GroundState pack_critical(const TransformPlan& plan,
                          const ProblemParams& params,
                          const DerivedConstants& c, const CritOut& o,
                          const SolverOptions& opts) {
  check_quality(o.res, std::min(opts.tol_residual, 1e-10), params.lambda);
  GroundState gs;
  gs.params = params;
  gs.iterations = o.iters;
  gs.final_residual = o.res;
  gs.converged = o.res < opts.tol_residual;
  gs.rho_hat = o.rho;
  gs.tail_amp = o.A;
  RadialProfile v = make_profile(plan.grid, o.v, c.d);
  v.tail_amp = o.A;
  v.tail_rho = o.rho;
  if (opts.form == SolveForm::rescaled) {
    gs.profile = v;
    gs.report = energy_J(plan, gs.profile, params);
  } else {
    gs.profile = rescale_v_to_u(v, params);
    gs.report = energy_I(plan, gs.profile, params);
  }
  return gs;
}

GroundState pack_lowdim(const TransformPlan& plan, const ProblemParams& params,
                        const DerivedConstants& c, const LowOut& o,
                        const LowChain& ch, const SolverOptions& opts) {
  check_quality(o.res, std::min(opts.tol_residual, 1e-10), params.lambda);
  GroundState gs;
  gs.params = params;
  gs.iterations = o.iters;
  gs.final_residual = o.res;
  gs.converged = o.res < opts.tol_residual;
  gs.rho_hat = o.xi_w * ch.rho_eq;  // physical concentration of the v form
  gs.tail_amp = o.A;
  const RadialGrid& g = *plan.grid;
  double mass = std::pow(params.lambda, c.sigma);
  double m2 = mass * std::pow(ch.rho_eq, 2.0 * c.s);
  double g2 = 0, gq = 0, gc = 0;
  for (int i = 0; i < g.n; ++i) {
    double av = std::abs(o.v[i]);
    g2 += g.w[i] * av * av;
    gq += g.w[i] * std::pow(av, c.q);
    gc += g.w[i] * std::pow(av, c.two_star);
  }
  // gauge-level norms (t = 2 cut at the model crossover), then transformed
  // to the rescaled level; the seminorm is the bias-cancelled one so that
  // energy = (s/N) seminorm holds by construction
  double l2w = c.omega_N * (g2 + capped_tail_2(g, c, o.A, o.rho, m2));
  double lqw = c.omega_N * (gq + model_tail_t(g, c.d, o.A, c.q, o.rho));
  double lcw = c.omega_N * (gc + model_tail_t(g, c.d, o.A, c.two_star, o.rho));
  EnergyReport rj;
  rj.tag = EnergyTag::J;
  rj.seminorm_sq = (c.N / c.s) * o.m_lambda;
  rj.l2_sq = std::pow(ch.rho_eq, 2.0 * c.s) * l2w;
  rj.lq_q = std::pow(ch.rho_eq, c.N - c.q * c.d / 2.0) * lqw;
  rj.lcrit = lcw;
  rj.lp_p = lcw;
  rj.energy = o.m_lambda;
  double neh = rj.seminorm_sq + mass * rj.l2_sq - rj.lcrit - mass * rj.lq_q;
  rj.nehari_residual = std::abs(neh) / (rj.seminorm_sq + mass * rj.l2_sq);
  double poh = (c.d / 2.0) * rj.seminorm_sq + (c.N / 2.0) * mass * rj.l2_sq -
               (c.N / c.two_star) * rj.lcrit - mass * (c.N / c.q) * rj.lq_q;
  rj.pohozaev_residual = std::abs(poh) / ((c.d / 2.0) * rj.seminorm_sq +
                                          (c.N / 2.0) * mass * rj.l2_sq);
  RadialProfile v = make_profile(plan.grid, o.v, c.d);
  v.tail_amp = o.A;
  v.tail_rho = o.rho;
  v.r_scale = ch.rho_eq;
  v.v_scale = std::pow(ch.rho_eq, -c.d / 2.0);
  if (opts.form == SolveForm::rescaled) {
    gs.profile = v;
    gs.report = rj;
  } else {
    gs.profile = rescale_v_to_u(v, params);
    EnergyReport ri = rj;
    ri.tag = EnergyTag::I;
    ri.l2_sq = mass * rj.l2_sq;
    ri.lq_q = std::pow(params.lambda, c.sigma - 1.0) * rj.lq_q;
    double neh_i =
        ri.seminorm_sq + ri.l2_sq - ri.lp_p - params.lambda * ri.lq_q;
    ri.nehari_residual = std::abs(neh_i) / (ri.seminorm_sq + ri.l2_sq);
    double poh_i = (c.d / 2.0) * ri.seminorm_sq + (c.N / 2.0) * ri.l2_sq -
                   (c.N / c.two_star) * ri.lp_p -
                   params.lambda * (c.N / c.q) * ri.lq_q;
    ri.pohozaev_residual = std::abs(poh_i) / ((c.d / 2.0) * ri.seminorm_sq +
                                              (c.N / 2.0) * ri.l2_sq);
    gs.report = ri;
  }
  return gs;
}

GroundState pack_subcritical(const TransformPlan& plan,
                             const ProblemParams& params,
                             const detail::TailPair& tc, const SubOut& o,
                             int warm_iters, const SolverOptions& opts) {
  check_quality(o.res, std::min(opts.tol_residual, 1e-12), params.lambda);
  GroundState gs;
  gs.params = params;
  gs.iterations = warm_iters + o.iters;
  gs.final_residual = o.res;
  gs.converged = o.res < opts.tol_residual;
  gs.rho_hat = 1.0;
  gs.tail_amp = o.A;
  gs.profile = make_profile(plan.grid, o.u, plan.N() + 2.0 * params.s);
  gs.profile.tail_amp = o.A;
  gs.profile.tail_rho = 1.0;
  gs.report = sub_report(plan, tc, o.u, o.A, params);
  return gs;
}

// continuation sources may live on another grid or in the other form; the
// base samples and template center are form-invariant, the gauge is not
VectorXd transported_vals(const RadialProfile& pr, const TransformPlan& plan) {
  const RadialGrid& g = *plan.grid;
  if (pr.grid.get() == plan.grid.get() ||
      (pr.grid && pr.grid->N == g.N && pr.grid->n == g.n &&
       pr.grid->R == g.R && pr.grid->kind == g.kind))
    return pr.vals;
  return resample(pr, plan.grid).vals;
}

double gauge_of(const GroundState& src, const DerivedConstants& c) {
  if (src.report.tag == EnergyTag::J) return src.profile.r_scale;
  double kap = c.sigma / (2.0 * c.s);
  return src.profile.r_scale / std::pow(src.params.lambda, kap);
}

}  // namespace

RadialProfile init_guess(const ProblemParams& params,
                         const TransformPlan& plan) {
  params.validate();
  DerivedConstants c = derive_constants(params);
  const RadialGrid& g = *plan.grid;
  if (params.critical()) {
    double rho = (c.existence_case == ExistenceCase::critical_lowdim)
                     ? lowdim_xi(c, std::max(params.lambda, 1e-8))
                     : rho0(c);
    ScalarFn U = talenti(rho, c);
    VectorXd vals(g.n);
    for (int i = 0; i < g.n; ++i) vals[i] = U(g.r[i]);
    RadialProfile v = make_profile(plan.grid, vals, c.d);
    v.tail_amp = Vector2d(bubble_amp(c, rho), 0.0);
    v.tail_rho = rho;
    if (params.lambda > 0) return rescale_v_to_u(v, params);
    return v;
  }
  double dt = g.N + 2.0 * params.s;
  VectorXd vals(g.n);
  for (int i = 0; i < g.n; ++i)
    vals[i] = std::pow(1.0 + g.r[i] * g.r[i], -dt / 2.0);
  RadialProfile u = make_profile(plan.grid, vals, dt);
  u.tail_amp = Vector2d(1.0, 0.0);
  u.tail_rho = 1.0;
  double semi = seminorm_sq(plan, u, params.s);
  double l2 = lp_norm_pow(u, 2.0), lp = lp_norm_pow(u, params.p);
  double lq = lp_norm_pow(u, params.q);
  // amplitude on the Nehari set: a^2 (semi + l2) = a^p lp + lambda a^q lq
  double aamp = std::pow((semi + l2) / (lp + params.lambda * lq),
                         1.0 / (params.p - 2.0));
  for (int it = 0; it < 80; ++it) {
    double f = std::pow(aamp, params.p - 2.0) * lp +
               params.lambda * std::pow(aamp, params.q - 2.0) * lq;
    aamp *= std::pow((semi + l2) / f, 0.5 / (params.p - 2.0));
  }
  u.v_scale = aamp;
  u.tail_amp = Vector2d(aamp, 0.0);
  return u;
}

GroundState solve_ground_state(const ProblemParams& params,
                               const TransformPlan& plan,
                               const SolverOptions& opts) {
  params.validate();
  DerivedConstants c = derive_constants(params);
  if (params.critical()) {
    if (!(params.lambda > 0))
      throw NoSolution(
          "the critical problem has no ground state at lambda = 0; the "
          "infimum equals the bubble level and is not attained");
    MatrixXd Lmat = operator_matrix(plan, params.s);
    if (c.existence_case == ExistenceCase::critical_lowdim) {
      LowChain ch;
      ch.rho_eq = lowdim_xi(c, params.lambda);
      if (opts.continuation_from) {
        ch.rho_eq = gauge_of(*opts.continuation_from, c);
        ch.v = transported_vals(opts.continuation_from->profile, plan);
        ch.rho_state = opts.continuation_from->profile.tail_rho;
        ch.live = true;
      }
      LowOut o = lowdim_step(plan, Lmat, c, params.lambda, opts, ch);
      return pack_lowdim(plan, params, c, o, ch, opts);
    }
    CritChain ch;
    if (opts.continuation_from) {
      ch.v = transported_vals(opts.continuation_from->profile, plan);
      ch.rho_state = opts.continuation_from->profile.tail_rho;
      ch.live = true;
    }
    CritOut o = critical_step(plan, Lmat, c, params.lambda, opts, ch);
    return pack_critical(plan, params, c, o, opts);
  }
  if (opts.form == SolveForm::rescaled)
    throw InvalidRegime(
        "the rescaled form is defined through the critical-exponent "
        "conjugacy; solve the subcritical problem in original form");
  MatrixXd Lmat = operator_matrix(plan, params.s);
  detail::TailPair tc;
  double dt = plan.N() + 2.0 * params.s;
  tc.refresh(plan, 1.0, dt, params.s);
  WindowMap wm = window_map(*plan.grid, tc);
  VectorXd u;
  int warm_iters = 0;
  if (opts.continuation_from) {
    u = transported_vals(opts.continuation_from->profile, plan);
  } else {
    u = init_guess(params, plan).vals;
    u = picard_stage(plan, params, u, opts.damping,
                     std::min(opts.max_iter, 400), warm_iters, opts.trace);
  }
  SubOut o = solve_sub(plan, Lmat, tc, wm, params, u, opts.damping,
                       std::min(opts.tol_residual, 1e-12),
                       std::min(opts.max_iter, 60));
  if (o.u.lpNorm<Eigen::Infinity>() < 1e-12)
    throw CollapseToZero("Newton stage collapsed to the zero profile");
  return pack_subcritical(plan, params, tc, o, warm_iters, opts);
}

std::vector<GroundState> continuation_solve(const ProblemParams& base,
                                            const TransformPlan& plan,
                                            const std::vector<double>& lambdas,
                                            const SolverOptions& opts) {
  base.validate();
  std::vector<GroundState> out;
  if (lambdas.empty()) return out;
  for (size_t i = 1; i < lambdas.size(); ++i) {
    bool inc = lambdas[1] > lambdas[0];
    if ((inc && lambdas[i] <= lambdas[i - 1]) ||
        (!inc && lambdas[i] >= lambdas[i - 1]))
      throw InvalidParams("continuation schedule must be strictly monotone");
  }
  ProblemParams pk = base;
  DerivedConstants c = derive_constants(base);
  auto annotate = [](const Error& e, double lam) {
    return std::string(e.what()) + " [lambda = " + std::to_string(lam) + "]";
  };
  MatrixXd Lmat = operator_matrix(plan, base.s);
  if (base.critical()) {
    for (double lam : lambdas)
      if (!(lam > 0))
        throw NoSolution("critical schedule must keep lambda > 0");
    if (c.existence_case == ExistenceCase::critical_lowdim) {
      LowChain ch;
      ch.rho_eq = lowdim_xi(c, std::sqrt(lambdas.front() * lambdas.back()));
      if (opts.continuation_from) {
        ch.rho_eq = gauge_of(*opts.continuation_from, c);
        ch.v = transported_vals(opts.continuation_from->profile, plan);
        ch.rho_state = opts.continuation_from->profile.tail_rho;
        ch.live = true;
      }
      for (double lam : lambdas) {
        pk.lambda = lam;
        try {
          LowOut o = lowdim_step(plan, Lmat, c, lam, opts, ch);
          out.push_back(pack_lowdim(plan, pk, c, o, ch, opts));
        } catch (const Diverged& e) {
          throw Diverged(annotate(e, lam));
        } catch (const CollapseToZero& e) {
          throw CollapseToZero(annotate(e, lam));
        }
      }
      return out;
    }
    CritChain ch;
    if (opts.continuation_from) {
      ch.v = transported_vals(opts.continuation_from->profile, plan);
      ch.rho_state = opts.continuation_from->profile.tail_rho;
      ch.live = true;
    }
    for (double lam : lambdas) {
      pk.lambda = lam;
      try {
        CritOut o = critical_step(plan, Lmat, c, lam, opts, ch);
        out.push_back(pack_critical(plan, pk, c, o, opts));
      } catch (const Diverged& e) {
        throw Diverged(annotate(e, lam));
      } catch (const CollapseToZero& e) {
        throw CollapseToZero(annotate(e, lam));
      }
    }
    return out;
  }
  if (opts.form == SolveForm::rescaled)
    throw InvalidRegime(
        "the rescaled form is defined through the critical-exponent "
        "conjugacy; solve the subcritical problem in original form");
  detail::TailPair tc;
  double dt = plan.N() + 2.0 * base.s;
  tc.refresh(plan, 1.0, dt, base.s);
  WindowMap wm = window_map(*plan.grid, tc);
  VectorXd u;
  bool have = false;
  if (opts.continuation_from) {
    u = transported_vals(opts.continuation_from->profile, plan);
    have = true;
  }
  for (double lam : lambdas) {
    pk.lambda = lam;
    try {
      int warm_iters = 0;
      if (!have) {
        u = init_guess(pk, plan).vals;
        u = picard_stage(plan, pk, u, opts.damping,
                         std::min(opts.max_iter, 400), warm_iters,
                         opts.trace);
        have = true;
      }
      SubOut o = solve_sub(plan, Lmat, tc, wm, pk, u, opts.damping,
                           std::min(opts.tol_residual, 1e-12),
                           std::min(opts.max_iter, 60));
      u = o.u;
      out.push_back(pack_subcritical(plan, pk, tc, o, warm_iters, opts));
    } catch (const Diverged& e) {
      throw Diverged(annotate(e, lam));
    } catch (const CollapseToZero& e) {
      throw CollapseToZero(annotate(e, lam));
    }
  }
  return out;
}

double pde_residual(const RadialProfile& u, const ProblemParams& params,
                    const TransformPlan& plan) {
  params.validate();
  if (u.n() == 0 || u.vals.lpNorm<Eigen::Infinity>() == 0.0) return 0.0;
  RadialProfile f = frac_laplacian(plan, u, params.s);
  const RadialGrid& g = *plan.grid;
  double num = 0, den = 0;
  for (int i = 0; i < g.n; ++i) {
    double ui = u.value(i);
    double up = std::max(ui, 0.0);
    double ri = f.value(i) + ui - std::pow(up, params.p - 1.0) -
                params.lambda * std::pow(up, params.q - 1.0);
    num += g.w[i] * ri * ri;
    den += g.w[i] * ui * ui;
  }
  return std::sqrt(num / den);
}

}  // namespace fslab
