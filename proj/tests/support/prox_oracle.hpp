#pragma once

// Independent numeric oracles for the proximal-operator tests: derivative
// bisection for the scalar cases, the dense interior point solver for the
// battery program. None of them share code with the analytic formulas.

#include <vector>

#include "gridmp/dense_qp.hpp"
#include "gridmp/network.hpp"

namespace gridmp::testing {

// argmin over [lo, hi] of a*p^2 + b*p + rho/2 (p - x)^2, via bisection on
// the (monotone) derivative.
inline double generator_prox_oracle(double a, double b, double lo, double hi,
                                    double x, double rho) {
  auto dfdp = [&](double p) { return 2.0 * a * p + b + rho * (p - x); };
  if (dfdp(lo) >= 0.0) return lo;
  if (dfdp(hi) <= 0.0) return hi;
  double l = lo, r = hi;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (l + r);
    (dfdp(m) > 0.0 ? r : l) = m;
  }
  return 0.5 * (l + r);
}

struct LineProxPoint {
  double p1, p2, th1, th2;
};

// AC line prox for one period: parametrize by the flow f = p2 with
// p1 = -f and theta eliminated on the constraint {th1 - th2 = f / b},
// then bisect the scalar derivative over [-u, u].
inline LineProxPoint ac_line_prox_oracle(double u, double bsus, double x1,
                                         double x2, double y1, double y2,
                                         double rho_p, double rho_t) {
  auto dphi = [&](double f) {
    return rho_p * ((f + x1) + (f - x2)) +
           0.5 * rho_t * (f / bsus - (y1 - y2)) / bsus;
  };
  double f;
  if (dphi(-u) >= 0.0) {
    f = -u;
  } else if (dphi(u) <= 0.0) {
    f = u;
  } else {
    double l = -u, r = u;
    for (int i = 0; i < 200; ++i) {
      const double m = 0.5 * (l + r);
      (dphi(m) > 0.0 ? r : l) = m;
    }
    f = 0.5 * (l + r);
  }
  // Given f, the phases minimize rho_t/2 [(th1-y1)^2 + (th2-y2)^2] subject
  // to th1 - th2 = f / bsus.
  const double shift = 0.5 * (f / bsus - (y1 - y2));
  LineProxPoint out;
  out.p2 = f;
  out.p1 = -f;
  out.th1 = y1 + shift;
  out.th2 = y2 - shift;
  return out;
}

// Battery prox: min alpha*sum(dis) + rho/2 ||p - x||^2 over the battery
// program, a dense QP in (p, charge, discharge, soc).
inline std::vector<double> battery_prox_oracle(double alpha, double eff,
                                               double cap, double dur, int T,
                                               const std::vector<double>& x,
                                               double rho) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = 4 * T + 1;
  const int p0 = 0, c0 = T, d0 = 2 * T, s0 = 3 * T;
  DenseQp qp;
  qp.P = MatrixXd::Zero(n, n);
  qp.c = VectorXd::Zero(n);
  for (int t = 0; t < T; ++t) {
    qp.P(p0 + t, p0 + t) = rho;
    qp.c[p0 + t] = -rho * x[t];
    qp.c[d0 + t] = alpha;
  }
  const int me = 2 * T + 2;
  qp.A = MatrixXd::Zero(me, n);
  qp.b = VectorXd::Zero(me);
  int row = 0;
  for (int t = 0; t < T; ++t, ++row) {
    qp.A(row, p0 + t) = 1.0;
    qp.A(row, d0 + t) = -1.0;
    qp.A(row, c0 + t) = 1.0;
  }
  for (int t = 0; t < T; ++t, ++row) {
    qp.A(row, s0 + t + 1) = 1.0;
    qp.A(row, s0 + t) = -1.0;
    qp.A(row, c0 + t) = -eff;
    qp.A(row, d0 + t) = 1.0;
  }
  qp.A(row++, s0) = 1.0;
  qp.A(row++, s0 + T) = 1.0;
  const int mi = 6 * T + 2;
  qp.G = MatrixXd::Zero(mi, n);
  qp.h = VectorXd::Zero(mi);
  int ir = 0;
  for (int t = 0; t < T; ++t) {
    qp.G(ir, c0 + t) = 1.0;
    qp.h(ir++) = cap;
    qp.G(ir++, c0 + t) = -1.0;
    qp.G(ir, d0 + t) = 1.0;
    qp.h(ir++) = cap;
    qp.G(ir++, d0 + t) = -1.0;
  }
  for (int t = 0; t <= T; ++t) {
    qp.G(ir, s0 + t) = 1.0;
    qp.h(ir++) = dur * cap;
    qp.G(ir++, s0 + t) = -1.0;
  }
  const QpResult r = solve_dense_qp(qp, 1e-10, 200);
  std::vector<double> p(T);
  for (int t = 0; t < T; ++t) p[t] = r.x[p0 + t];
  return p;
}

}  // namespace gridmp::testing
