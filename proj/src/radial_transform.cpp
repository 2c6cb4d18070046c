#include "fslab/radial_transform.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_interp.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_spline.h>

#include <cmath>

namespace fslab {

namespace {

struct GslQuiet {
  GslQuiet() { gsl_set_error_handler_off(); }
};
const GslQuiet gsl_quiet;

// J_nu zeros and values; half-integer and integer orders get the closed
// forms so large plans stay cheap.
double bzero(double nu, int k) {
  if (std::abs(nu + 0.5) < 1e-14) return (k - 0.5) * M_PI;
  if (std::abs(nu - 0.5) < 1e-14) return k * M_PI;
  if (std::abs(nu) < 1e-14) return gsl_sf_bessel_zero_J0(k);
  if (std::abs(nu - 1.0) < 1e-14) return gsl_sf_bessel_zero_J1(k);
  return gsl_sf_bessel_zero_Jnu(nu, k);
}

double bj(double nu, double x) {
  if (std::abs(nu + 0.5) < 1e-14) return std::sqrt(2.0 / (M_PI * x)) * std::cos(x);
  if (std::abs(nu - 0.5) < 1e-14) return std::sqrt(2.0 / (M_PI * x)) * std::sin(x);
  if (std::abs(nu) < 1e-14) return gsl_sf_bessel_J0(x);
  if (std::abs(nu - 1.0) < 1e-14) return gsl_sf_bessel_J1(x);
  return gsl_sf_bessel_Jnu(nu, x);
}

double surface_measure(int N) {
  return 2.0 * std::pow(M_PI, N / 2.0) / std::tgamma(N / 2.0);
}

double gauss_series(double a, double b, double c, double w) {
  double t = 1.0, acc = 1.0;
  for (int k = 0; k < 4000; ++k) {
    t *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * w;
    acc += t;
    if (std::abs(t) < 1e-17 * std::abs(acc)) break;
  }
  return acc;
}

bool nonpositive_int(double x) {
  return x <= 0.0 && std::abs(x - std::round(x)) < 1e-13;
}

// 2F1 on [0,1): direct Gauss series for small w, Euler connection toward
// w = 1 otherwise. Terminating (polynomial) cases bypass the connection,
// which would hit Gamma poles.
double hyp2f1(double a, double b, double c, double w) {
  if (nonpositive_int(a) || nonpositive_int(b)) return gauss_series(a, b, c, w);
  if (w < 0.55) return gauss_series(a, b, c, w);
  double cab = c - a - b;
  if (std::abs(cab - std::round(cab)) < 1e-9)
    throw DomainError("hyp2f1: integer c-a-b not supported");
  double g1 = std::tgamma(c) * std::tgamma(cab) /
              (std::tgamma(c - a) * std::tgamma(c - b));
  double g2 = std::tgamma(c) * std::tgamma(-cab) /
              (std::tgamma(a) * std::tgamma(b));
  return g1 * gauss_series(a, b, 1.0 - cab, 1.0 - w) +
         g2 * std::pow(1.0 - w, cab) * gauss_series(c - a, c - b, 1.0 + cab, 1.0 - w);
}

void check_grid_args(int N, double R, int n) {
  if (N < 1) throw InvalidParams("grid: dimension must be >= 1");
  if (!(R > 0.0)) throw InvalidParams("grid: radius must be positive");
  if (n < 4) throw InvalidParams("grid: need at least 4 nodes");
}

bool same_grid(const RadialGrid& a, const RadialGrid& b) {
  return a.N == b.N && a.n == b.n && a.kind == b.kind &&
         std::abs(a.R - b.R) <= 1e-12 * std::abs(a.R);
}

void require_plan_grid(const TransformPlan& plan, const RadialProfile& u,
                       const char* who) {
  if (!u.grid || !same_grid(*plan.grid, *u.grid))
    throw GridMismatch(std::string(who) + ": profile grid differs from plan grid");
}

// Evaluate the two-term tail model and its operator image at radius r.
double tail_value(const RadialProfile& u, double r) {
  double y = r / u.tail_rho;
  double e = *u.tail_exp;
  const Eigen::Vector2d& A = *u.tail_amp;
  double z = 1.0 + y * y;
  return A[0] * std::pow(z, -e / 2.0) + A[1] * std::pow(z, -(e + 2.0) / 2.0);
}

double tail_image(const RadialProfile& u, double s, int N, double r) {
  double y = r / u.tail_rho;
  double e = *u.tail_exp;
  double is2 = std::pow(u.tail_rho, -2.0 * s);
  const Eigen::Vector2d& A = *u.tail_amp;
  return is2 * (A[0] * detail::philap(N, s, e, y) +
                A[1] * detail::philap(N, s, e + 2.0, y));
}

// Profile with tail_exp but no amplitudes: fit them so completions can run.
RadialProfile with_fitted_tail(const TransformPlan& plan,
                               const RadialProfile& u) {
  RadialProfile v = u;
  if (v.tail_exp && !v.tail_amp) {
    detail::TailPair tp;
    tp.refresh_templates(*plan.grid, v.tail_rho, *v.tail_exp);
    v.tail_amp = tp.fit_window(*plan.grid, v.vals);
  }
  return v;
}

}  // namespace

RadialGrid build_grid(int N, double R, int n, GridKind kind) {
  check_grid_args(N, R, n);
  RadialGrid g;
  g.N = N;
  g.R = R;
  g.n = n;
  g.kind = kind;
  g.r.resize(n);
  g.w.resize(n);
  if (kind == GridKind::bessel_zeros) {
    double nu = N / 2.0 - 1.0;
    double S = bzero(nu, n + 1), V = S / R;
    for (int k = 0; k < n; ++k) {
      double jk = bzero(nu, k + 1);
      g.r[k] = jk * R / S;
      double j1 = bj(nu + 1.0, jk);
      g.w[k] = 2.0 / (V * V * j1 * j1) * std::pow(g.r[k], N - 2);
    }
  } else {
    // Gauss-Legendre in log r over [R*1e-13, R]; weights absorb r^N from the
    // change of variables, so smooth integrands vanish at both panel ends.
    std::vector<double> x, w;
    detail::gauss_legendre(n, x, w);
    double u1 = std::log(R), u0 = u1 + std::log(1e-13), span = u1 - u0;
    for (int k = 0; k < n; ++k) {
      double u = u0 + span * x[k];
      g.r[k] = std::exp(u);
      g.w[k] = span * w[k] * std::pow(g.r[k], N);
    }
  }
  return g;
}

TransformPlan build_plan(int N, double R, int n) {
  check_grid_args(N, R, n);
  TransformPlan p;
  p.grid = std::make_shared<RadialGrid>(build_grid(N, R, n, GridKind::bessel_zeros));
  p.nu = N / 2.0 - 1.0;
  p.S = bzero(p.nu, n + 1);
  double V = p.S / R;
  p.rho.resize(n);
  p.wf.resize(n);
  Eigen::VectorXd j1(n);
  for (int k = 0; k < n; ++k) {
    double jk = bzero(p.nu, k + 1);
    p.rho[k] = jk / R;
    j1[k] = bj(p.nu + 1.0, jk);
    p.wf[k] = 2.0 / (R * R * j1[k] * j1[k]) * std::pow(p.rho[k], N - 2);
  }
  p.F.resize(n, n);
  p.B.resize(n, n);
  const Eigen::VectorXd& r = p.grid->r;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      double jj = bj(p.nu, p.rho[m] * r[k]);
      p.F(m, k) = std::pow(p.rho[m], -p.nu) * std::pow(r[k], p.nu) *
                  (2.0 / (V * V * j1[k] * j1[k])) * jj;
      p.B(k, m) = std::pow(r[k], -p.nu) * std::pow(p.rho[m], p.nu) *
                  (2.0 / (R * R * j1[m] * j1[m])) * jj;
    }
  return p;
}

Eigen::MatrixXd operator_matrix(const TransformPlan& plan, double s) {
  return plan.B * (plan.rho.array().pow(2.0 * s).matrix().asDiagonal() * plan.F);
}

RadialProfile make_profile(std::shared_ptr<const RadialGrid> grid,
                           Eigen::VectorXd vals,
                           std::optional<double> tail_exp) {
  if (!grid) throw InvalidParams("make_profile: null grid");
  if (vals.size() != grid->n)
    throw GridMismatch("make_profile: value count differs from grid size");
  RadialProfile u;
  u.grid = std::move(grid);
  u.vals = std::move(vals);
  u.tail_exp = tail_exp;
  return u;
}

RadialProfile frac_laplacian(const TransformPlan& plan, const RadialProfile& u,
                             double s) {
  require_plan_grid(plan, u, "frac_laplacian");
  RadialProfile uf = with_fitted_tail(plan, u);
  RadialProfile out;
  out.grid = u.grid;
  out.r_scale = u.r_scale;
  out.v_scale = u.v_scale * std::pow(u.r_scale, -2.0 * s);
  if (uf.tail_amp) {
    detail::TailPair tp;
    tp.refresh(plan, uf.tail_rho, *uf.tail_exp, s);
    Eigen::Vector2d A = *uf.tail_amp;
    out.vals = detail::ball_apply(plan, s, uf.vals) + A[0] * tp.D1 + A[1] * tp.D2;
  } else {
    out.vals = detail::ball_apply(plan, s, uf.vals);
  }
  return out;
}

RadialProfile resolvent(const TransformPlan& plan, const RadialProfile& f,
                        double s, double a) {
  require_plan_grid(plan, f, "resolvent");
  double a_base = a * std::pow(f.r_scale, 2.0 * s);
  RadialProfile out;
  out.grid = f.grid;
  out.r_scale = f.r_scale;
  out.v_scale = f.v_scale * std::pow(f.r_scale, 2.0 * s);
  Eigen::VectorXd hat = plan.F * f.vals;
  for (int k = 0; k < plan.n(); ++k) {
    double den = std::pow(plan.rho[k], 2.0 * s) + a_base;
    if (std::abs(den) < 1e-14)
      throw SingularShift("resolvent: shift cancels a transform mode");
    hat[k] /= den;
  }
  out.vals = plan.B * hat;
  if (f.tail_exp)
    out.tail_exp = std::min(*f.tail_exp, f.grid->N + 2.0 * s);
  return out;
}

double lp_norm_pow(const RadialProfile& u, double t) {
  if (!u.grid) throw InvalidParams("lp_norm_pow: empty profile");
  if (!(t > 0.0)) throw InvalidParams("lp_norm_pow: exponent must be positive");
  const RadialGrid& g = *u.grid;
  double acc = 0.0;
  for (int i = 0; i < g.n; ++i)
    acc += g.w[i] * std::pow(std::abs(u.vals[i]), t);
  if (u.tail_exp) {
    double e = t * *u.tail_exp;
    if (e - g.N <= 1e-9)
      throw DivergentNorm("lp_norm_pow: declared tail not integrable at this power");
    if (u.tail_amp && (*u.tail_amp)[0] > 0.0) {
      // two-term expansion of the model tail integral beyond R
      double rho = u.tail_rho, b = *u.tail_exp;
      const Eigen::Vector2d& A = *u.tail_amp;
      double A1 = A[0] * std::pow(rho, b);
      double c2 = rho * rho * (A[1] / A[0] - b / 2.0);
      c2 = std::max(-0.3 * g.R * g.R, std::min(0.3 * g.R * g.R, c2));
      double lead = std::pow(g.R, g.N - e) / (e - g.N);
      double corr = t * c2 * std::pow(g.R, g.N - e - 2.0) / (e + 2.0 - g.N);
      acc += std::pow(A1, t) * (lead + corr);
    } else if (!u.tail_amp) {
      // power-law continuation matched at the last node
      double un = std::abs(u.vals[g.n - 1]), rn = g.r[g.n - 1];
      if (un > 0.0)
        acc += std::pow(un, t) * std::pow(rn, e) * std::pow(g.R, g.N - e) / (e - g.N);
    }
  }
  return surface_measure(g.N) * std::pow(std::abs(u.v_scale), t) *
         std::pow(u.r_scale, g.N) * acc;
}

double lp_norm(const RadialProfile& u, double t) {
  return std::pow(lp_norm_pow(u, t), 1.0 / t);
}

double seminorm_sq(const TransformPlan& plan, const RadialProfile& u, double s) {
  require_plan_grid(plan, u, "seminorm_sq");
  const RadialGrid& g = *plan.grid;
  RadialProfile uf = with_fitted_tail(plan, u);
  double acc = 0.0;
  if (uf.tail_amp) {
    detail::TailPair tp;
    tp.refresh(plan, uf.tail_rho, *uf.tail_exp, s);
    Eigen::Vector2d A = *uf.tail_amp;
    Eigen::VectorXd Lu =
        detail::ball_apply(plan, s, uf.vals) + A[0] * tp.D1 + A[1] * tp.D2;
    for (int i = 0; i < g.n; ++i) acc += g.w[i] * Lu[i] * uf.vals[i];
    // model continuation of the pairing on (R, infinity), mapped to (0,1]
    std::vector<double> gx, gw;
    detail::gl32(gx, gw);
    for (size_t i = 0; i < gx.size(); ++i) {
      double x = gx[i];
      if (x < 1e-12) continue;
      double r = g.R / x;
      acc += gw[i] * tail_value(uf, r) * tail_image(uf, s, g.N, r) *
             std::pow(r, g.N - 1) * g.R / (x * x);
    }
  } else {
    Eigen::VectorXd Lu = detail::ball_apply(plan, s, uf.vals);
    for (int i = 0; i < g.n; ++i) acc += g.w[i] * Lu[i] * uf.vals[i];
  }
  return surface_measure(g.N) * u.v_scale * u.v_scale *
         std::pow(u.r_scale, g.N - 2.0 * s) * acc;
}

RadialProfile resample(const RadialProfile& u,
                       std::shared_ptr<const RadialGrid> target) {
  if (!u.grid || !target) throw InvalidParams("resample: missing grid");
  const RadialGrid& src = *u.grid;
  int n = src.n;
  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = u.node(i);
    ys[i] = u.value(i);
  }
  double r_last = xs[n - 1];
  bool need_tail = false;
  for (int i = 0; i < target->n; ++i)
    if (target->r[i] > r_last) need_tail = true;
  if (need_tail && !u.tail_exp)
    throw TailUnknown("resample: target extends beyond the profile without a declared tail");

  gsl_spline* sp = gsl_spline_alloc(gsl_interp_steffen, n);
  gsl_interp_accel* acc = gsl_interp_accel_alloc();
  gsl_spline_init(sp, xs.data(), ys.data(), n);
  RadialProfile out;
  out.grid = target;
  out.vals.resize(target->n);
  for (int i = 0; i < target->n; ++i) {
    double r = target->r[i];
    if (r < xs[0]) {
      // even extension through r = 0
      double t = (r * r - xs[0] * xs[0]) / (xs[1] * xs[1] - xs[0] * xs[0]);
      out.vals[i] = ys[0] + t * (ys[1] - ys[0]);
    } else if (r > r_last) {
      out.vals[i] = ys[n - 1] * std::pow(r / r_last, -*u.tail_exp);
    } else {
      out.vals[i] = gsl_spline_eval(sp, r, acc);
    }
  }
  gsl_spline_free(sp);
  gsl_interp_accel_free(acc);
  out.tail_exp = u.tail_exp;
  return out;
}

namespace detail {

double philap(int N, double s, double beta, double y) {
  double b = beta / 2.0;
  double coef = std::pow(4.0, s) * std::tgamma(b + s) * std::tgamma(N / 2.0 + s) /
                (std::tgamma(b) * std::tgamma(N / 2.0));
  double w = y * y / (1.0 + y * y);
  return coef * std::pow(1.0 + y * y, -(N / 2.0 + s)) *
         hyp2f1(N / 2.0 - b - s, N / 2.0 + s, N / 2.0, w);
}

void gauss_legendre(int m, std::vector<double>& gx, std::vector<double>& gw) {
  gx.resize(m);
  gw.resize(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
    double p0 = 1, p1 = x, dp = 0;
    for (int it = 0; it < 100; ++it) {
      p0 = 1;
      p1 = x;
      for (int k = 2; k <= m; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // nodes mapped to [0,1], symmetric pair filled together
    gx[i] = 0.5 * (1.0 - x);
    gx[m - 1 - i] = 0.5 * (1.0 + x);
    gw[i] = gw[m - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
}

void gl32(std::vector<double>& x, std::vector<double>& w) {
  static std::vector<double> cx, cw;
  if (cx.empty()) gauss_legendre(32, cx, cw);
  x = cx;
  w = cw;
}

Eigen::VectorXd ball_apply(const TransformPlan& plan, double s,
                           const Eigen::VectorXd& u) {
  return plan.B * (plan.rho.array().pow(2.0 * s).matrix().asDiagonal() * (plan.F * u));
}

void TailPair::refresh_templates(const RadialGrid& g, double rho_, double beta_) {
  N = g.N;
  rho = rho_;
  beta = beta_;
  int n = g.n;
  T1.resize(n);
  T2.resize(n);
  for (int i = 0; i < n; ++i) {
    double y = g.r[i] / rho;
    T1[i] = std::pow(1.0 + y * y, -beta / 2.0);
    T2[i] = std::pow(1.0 + y * y, -(beta + 2.0) / 2.0);
  }
  Eigen::VectorXd wT1(n), wT2(n);
  for (int i = 0; i < n; ++i) {
    wT1[i] = g.w[i] * T1[i];
    wT2[i] = g.w[i] * T2[i];
  }
  G(0, 0) = wT1.dot(T1);
  G(0, 1) = G(1, 0) = wT1.dot(T2);
  G(1, 1) = wT2.dot(T2);
}

void TailPair::refresh(const TransformPlan& plan, double rho_, double beta_,
                       double s_) {
  refresh_templates(*plan.grid, rho_, beta_);
  s = s_;
  int n = plan.n();
  double is2 = std::pow(rho, -2.0 * s);
  P1.resize(n);
  P2.resize(n);
  for (int i = 0; i < n; ++i) {
    double y = plan.grid->r[i] / rho;
    P1[i] = is2 * philap(plan.N(), s, beta, y);
    P2[i] = is2 * philap(plan.N(), s, beta + 2.0, y);
  }
  D1 = P1 - ball_apply(plan, s, T1);
  D2 = P2 - ball_apply(plan, s, T2);
}

Eigen::Vector2d TailPair::fit(const RadialGrid& g, const Eigen::VectorXd& u) const {
  Eigen::Vector2d rhs;
  rhs[0] = (g.w.array() * T1.array() * u.array()).sum();
  rhs[1] = (g.w.array() * T2.array() * u.array()).sum();
  return G.inverse() * rhs;
}

Eigen::Vector2d TailPair::fit_window(const RadialGrid& g, const Eigen::VectorXd& u,
                                     double lo, double hi) const {
  int i0 = 0, i1 = 0;
  for (int i = 0; i < g.n; ++i) {
    if (g.r[i] < lo * g.R) i0 = i + 1;
    if (g.r[i] <= hi * g.R) i1 = i + 1;
  }
  int m = i1 - i0;
  if (m < 2) throw InvalidParams("fit_window: tail window has fewer than 2 nodes");
  Eigen::MatrixXd X(m, 2);
  Eigen::VectorXd y(m);
  for (int i = 0; i < m; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = T2[i0 + i] / T1[i0 + i];
    y[i] = u[i0 + i] / T1[i0 + i];
  }
  return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

}  // namespace detail

}  // namespace fslab
