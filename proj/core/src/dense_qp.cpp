#include "gridmp/dense_qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridmp {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Largest step in [0, 1] keeping v + a*dv > 0.
double max_step(const VectorXd& v, const VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  }
  return a;
}

// Solves the saddle system [H A'; A 0] [dx; dy] = [rx; ry] by regularized
// Schur-complement Cholesky with iterative refinement against the
// unregularized operator.
struct KktSolver {
  int n = 0, me = 0;
  double reg = 0.0;
  const MatrixXd* H = nullptr;
  const MatrixXd* A = nullptr;
  Eigen::LLT<MatrixXd> chol_h;
  Eigen::LLT<MatrixXd> chol_s;
  MatrixXd hinv_at;

  bool factor(const MatrixXd& Hm, const MatrixXd& Am, double base_reg) {
    H = &Hm;
    A = &Am;
    n = static_cast<int>(Hm.rows());
    me = static_cast<int>(Am.rows());
    reg = base_reg;
    for (int attempt = 0; attempt < 6; ++attempt) {
      MatrixXd Hr = Hm;
      Hr.diagonal().array() += reg;
      chol_h.compute(Hr);
      if (chol_h.info() != Eigen::Success) {
        reg *= 100.0;
        continue;
      }
      if (me > 0) {
        hinv_at = chol_h.solve(Am.transpose());
        MatrixXd S = Am * hinv_at;
        S.diagonal().array() += reg;
        chol_s.compute(S);
        if (chol_s.info() != Eigen::Success) {
          reg *= 100.0;
          continue;
        }
      }
      return true;
    }
    return false;
  }

  void solve_once(const VectorXd& rx, const VectorXd& ry, VectorXd& dx,
                  VectorXd& dy) const {
    const VectorXd w = chol_h.solve(rx);
    if (me > 0) {
      dy = chol_s.solve(*A * w - ry);
      dx = w - hinv_at * dy;
    } else {
      dy.resize(0);
      dx = w;
    }
  }

  void solve(const VectorXd& rx, const VectorXd& ry, VectorXd& dx,
             VectorXd& dy) const {
    solve_once(rx, ry, dx, dy);
    // A few refinement sweeps knock out the regularization error.
    for (int sweep = 0; sweep < 3; ++sweep) {
      VectorXd res_x = rx - (*H) * dx;
      VectorXd res_y;
      if (me > 0) {
        res_x -= A->transpose() * dy;
        res_y = ry - (*A) * dx;
      }
      const double scale = 1.0 + inf_norm(rx) + inf_norm(ry);
      if (std::max(inf_norm(res_x), inf_norm(res_y)) <= 1e-13 * scale) break;
      VectorXd cx, cy;
      solve_once(res_x, res_y, cx, cy);
      dx += cx;
      if (me > 0) dy += cy;
    }
  }
};

QpResult run_ipm(const DenseQp& qp, double tol, int max_iter) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.A.rows());
  const int mi = static_cast<int>(qp.G.rows());

  QpResult res;
  res.x = VectorXd::Zero(n);
  res.y = VectorXd::Zero(me);
  res.z = VectorXd::Ones(mi);
  VectorXd s = VectorXd::Ones(mi);

  const double scale_c = 1.0 + inf_norm(qp.c);
  const double scale_b = 1.0 + (me > 0 ? inf_norm(qp.b) : 0.0) +
                         (mi > 0 ? inf_norm(qp.h) : 0.0);
  const double p_max = qp.P.size() > 0 ? qp.P.cwiseAbs().maxCoeff() : 0.0;
  const double base_reg = 1e-9 * (1.0 + p_max);

  KktSolver kkt;
  VectorXd dx, dy, dz(mi), ds(mi);

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it;
    const VectorXd Px = qp.P * res.x;
    VectorXd rd = Px + qp.c;
    if (me > 0) rd += qp.A.transpose() * res.y;
    if (mi > 0) rd += qp.G.transpose() * res.z;
    const VectorXd rp = me > 0 ? VectorXd(qp.A * res.x - qp.b) : VectorXd();
    const VectorXd rg = mi > 0 ? VectorXd(qp.G * res.x + s - qp.h) : VectorXd();
    const double mu = mi > 0 ? s.dot(res.z) / mi : 0.0;

    const double obj = 0.5 * res.x.dot(Px) + qp.c.dot(res.x);
    const double kres = std::max({inf_norm(rd) / scale_c,
                                  inf_norm(rp) / scale_b,
                                  inf_norm(rg) / scale_b,
                                  mu / (1.0 + std::abs(obj))});
    res.kkt_residual = kres;
    res.objective = obj;
    if (kres <= tol) {
      res.status = QpStatus::optimal;
      return res;
    }

    MatrixXd H = qp.P;
    if (mi > 0) {
      const VectorXd d = (res.z.array() / s.array()).matrix();
      H.noalias() += qp.G.transpose() * d.asDiagonal() * qp.G;
    }
    if (!kkt.factor(H, qp.A, base_reg)) {
      break;  // hopeless conditioning; report best iterate
    }

    // Affine (predictor) direction.
    VectorXd rx = -rd;
    if (mi > 0) {
      rx += qp.G.transpose() *
            (res.z.array() - res.z.array() / s.array() * rg.array()).matrix();
    }
    kkt.solve(rx, me > 0 ? VectorXd(-rp) : VectorXd(), dx, dy);

    if (mi > 0) {
      ds = -rg - qp.G * dx;
      dz = (-(s.array() * res.z.array()) - res.z.array() * ds.array()) / s.array();
      const double a_aff = std::min(max_step(s, ds), max_step(res.z, dz));
      const double mu_aff = (s + a_aff * ds).dot(res.z + a_aff * dz) / mi;
      const double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3);
      const VectorXd comp_corr = (ds.array() * dz.array() - sigma * mu).matrix();

      // Corrector direction with the same factorization.
      rx = -rd;
      rx += qp.G.transpose() *
            ((s.array() * res.z.array() + comp_corr.array()) / s.array() -
             res.z.array() / s.array() * rg.array())
                .matrix();
      kkt.solve(rx, me > 0 ? VectorXd(-rp) : VectorXd(), dx, dy);
      ds = -rg - qp.G * dx;
      dz = (-(s.array() * res.z.array() + comp_corr.array()) -
            res.z.array() * ds.array()) /
           s.array();
    }

    double alpha = 1.0;
    if (mi > 0) {
      alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(res.z, dz)));
    }
    res.x += alpha * dx;
    if (me > 0) res.y += alpha * dy;
    if (mi > 0) {
      s += alpha * ds;
      res.z += alpha * dz;
      s = s.cwiseMax(1e-300);
      res.z = res.z.cwiseMax(1e-300);
    }
  }
  res.status = QpStatus::max_iter;
  return res;
}

// Scaled KKT measure of a candidate point.
double kkt_measure(const DenseQp& qp, const VectorXd& x, const VectorXd& y,
                   const VectorXd& z, double* objective) {
  const int me = static_cast<int>(qp.A.rows());
  const int mi = static_cast<int>(qp.G.rows());
  const double scale_c = 1.0 + inf_norm(qp.c);
  const double scale_b = 1.0 + (me > 0 ? inf_norm(qp.b) : 0.0) +
                         (mi > 0 ? inf_norm(qp.h) : 0.0);
  VectorXd rd = qp.P * x + qp.c;
  if (me > 0) rd += qp.A.transpose() * y;
  if (mi > 0) rd += qp.G.transpose() * z;
  const double prim_eq = me > 0 ? inf_norm(qp.A * x - qp.b) : 0.0;
  double prim_in = 0.0, comp = 0.0, dual_sign = 0.0;
  if (mi > 0) {
    const VectorXd gx = qp.G * x - qp.h;
    for (int i = 0; i < mi; ++i) {
      prim_in = std::max(prim_in, gx[i]);
      comp = std::max(comp, std::abs(z[i] * gx[i]));
      dual_sign = std::max(dual_sign, -z[i]);
    }
  }
  const double obj = 0.5 * x.dot(qp.P * x) + qp.c.dot(x);
  if (objective) *objective = obj;
  return std::max({inf_norm(rd) / scale_c, prim_eq / scale_b, prim_in / scale_b,
                   dual_sign / scale_c, comp / (1.0 + std::abs(obj))});
}

// Active-set polish: re-solves the KKT system with the apparently active
// inequalities as equalities, then refines the set a few rounds (dropping
// rows with negative multipliers, adding violated ones). Nails vertex and
// degenerate solutions the path-following iteration only approaches.
void polish(const DenseQp& qp, double tol, QpResult& res) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.A.rows());
  const int mi = static_cast<int>(qp.G.rows());
  if (mi == 0) return;

  const double scale_h = 1.0 + inf_norm(qp.h);
  std::vector<char> active(mi, 0);
  {
    const VectorXd slack = qp.h - qp.G * res.x;
    for (int i = 0; i < mi; ++i) {
      active[i] = res.z[i] > slack[i] ? 1 : 0;
    }
  }

  QpResult best = res;
  for (int round = 0; round < 6; ++round) {
    std::vector<int> idx;
    for (int i = 0; i < mi; ++i) {
      if (active[i]) idx.push_back(i);
    }
    const int ma = static_cast<int>(idx.size());
    const int dim = n + me + ma;
    MatrixXd K = MatrixXd::Zero(dim, dim);
    K.topLeftCorner(n, n) = qp.P;
    VectorXd rhs(dim);
    rhs.head(n) = -qp.c;
    if (me > 0) {
      K.block(0, n, n, me) = qp.A.transpose();
      K.block(n, 0, me, n) = qp.A;
      rhs.segment(n, me) = qp.b;
    }
    for (int i = 0; i < ma; ++i) {
      K.block(0, n + me + i, n, 1) = qp.G.row(idx[i]).transpose();
      K.block(n + me + i, 0, 1, n) = qp.G.row(idx[i]);
      rhs[n + me + i] = qp.h[idx[i]];
    }
    // Least-squares solve keeps redundant (degenerate) active rows harmless.
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(K);
    const VectorXd sol = cod.solve(rhs);

    QpResult cand = res;
    cand.x = sol.head(n);
    if (me > 0) cand.y = sol.segment(n, me);
    cand.z.setZero();
    bool changed = false;
    for (int i = 0; i < ma; ++i) {
      const double zi = sol[n + me + i];
      if (zi < -1e-10) {
        active[idx[i]] = 0;  // wrongly pinned; release
        changed = true;
      } else {
        cand.z[idx[i]] = std::max(zi, 0.0);
      }
    }
    const VectorXd gx = qp.G * cand.x - qp.h;
    for (int i = 0; i < mi; ++i) {
      if (!active[i] && gx[i] > 1e-11 * scale_h) {
        active[i] = 1;  // violated; pin
        changed = true;
      }
    }
    double obj = 0.0;
    const double kres = kkt_measure(qp, cand.x, cand.y, cand.z, &obj);
    if (kres < best.kkt_residual) {
      cand.kkt_residual = kres;
      cand.objective = obj;
      cand.status = kres <= tol ? QpStatus::optimal : best.status;
      best = cand;
    }
    if (!changed) break;
  }
  res = best;
}

// Elastic feasibility program: minimize the total constraint violation.
//   min 1'(wp + wm) + 1'wg  s.t.  Ax - b = wp - wm, Gx <= h + wg, w >= 0.
double elastic_infeasibility(const DenseQp& qp, double tol) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.A.rows());
  const int mi = static_cast<int>(qp.G.rows());
  const int nv = n + 2 * me + mi;

  DenseQp el;
  el.P = MatrixXd::Zero(nv, nv);
  // Tiny curvature keeps the elastic LP strictly convex for the IPM.
  el.P.diagonal().setConstant(1e-9);
  el.c = VectorXd::Zero(nv);
  el.c.segment(n, 2 * me + mi).setOnes();

  el.A = MatrixXd::Zero(me, nv);
  el.b = qp.b;
  if (me > 0) {
    el.A.leftCols(n) = qp.A;
    el.A.block(0, n, me, me) = -MatrixXd::Identity(me, me);
    el.A.block(0, n + me, me, me) = MatrixXd::Identity(me, me);
  }

  el.G = MatrixXd::Zero(mi + 2 * me + mi, nv);
  el.h = VectorXd::Zero(mi + 2 * me + mi);
  if (mi > 0) {
    el.G.topLeftCorner(mi, n) = qp.G;
    el.G.block(0, n + 2 * me, mi, mi) = -MatrixXd::Identity(mi, mi);
    el.h.head(mi) = qp.h;
  }
  el.G.bottomRightCorner(2 * me + mi, 2 * me + mi) =
      -MatrixXd::Identity(2 * me + mi, 2 * me + mi);

  QpResult r = run_ipm(el, std::max(tol, 1e-9), 100);
  return std::max(0.0, r.objective);
}

}  // namespace

QpResult solve_dense_qp(const DenseQp& qp, double tol, int max_iter) {
  const int n = qp.num_vars();
  if (qp.P.rows() != n || qp.P.cols() != n) {
    throw std::invalid_argument("solve_dense_qp: P dimension mismatch");
  }
  if (qp.A.rows() != qp.b.size() || (qp.A.rows() > 0 && qp.A.cols() != n)) {
    throw std::invalid_argument("solve_dense_qp: equality block mismatch");
  }
  if (qp.G.rows() != qp.h.size() || (qp.G.rows() > 0 && qp.G.cols() != n)) {
    throw std::invalid_argument("solve_dense_qp: inequality block mismatch");
  }

  QpResult res = run_ipm(qp, tol, max_iter);
  polish(qp, tol, res);
  if (res.status == QpStatus::max_iter) {
    const double infeas = elastic_infeasibility(qp, tol);
    if (infeas > 1e-6 * (1.0 + inf_norm(qp.b) + inf_norm(qp.h))) {
      res.status = QpStatus::infeasible;
      res.infeasibility = infeas;
    }
  }
  return res;
}

}  // namespace gridmp
