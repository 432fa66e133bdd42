#include "gridmp/qp_prox.hpp"

#include <stdexcept>
#include <vector>

namespace gridmp {

std::shared_ptr<const QpKktFactor> factorize_qp_kkt(const QpDeviceForm& form,
                                                    double rho_p,
                                                    double rho_theta,
                                                    double omega) {
  if (rho_p <= 0 || rho_theta <= 0 || omega <= 0) {
    throw std::invalid_argument("qp_prox: penalties must be positive");
  }
  const int nt = form.tau * form.horizon;
  const int mu = form.num_locals;
  const int m = form.num_ineq;
  const int meq = form.num_eq;
  const int dim = form.kkt_dim();
  const int x_dim = 2 * nt + mu;

  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < nt; ++i) trips.emplace_back(i, i, rho_p);
  for (int i = 0; i < nt; ++i) trips.emplace_back(nt + i, nt + i, rho_theta);
  for (int r = 0; r < mu; ++r) {
    for (int c = 0; c < mu; ++c) {
      const double v = form.Q(r, c) + form.Q(c, r);
      if (v != 0.0) trips.emplace_back(2 * nt + r, 2 * nt + c, v);
    }
  }
  auto add_block = [&](const Eigen::MatrixXd& A, int row0, int col0) {
    for (int r = 0; r < static_cast<int>(A.rows()); ++r) {
      for (int c = 0; c < static_cast<int>(A.cols()); ++c) {
        const double v = A(r, c);
        if (v != 0.0) {
          trips.emplace_back(row0 + r, col0 + c, v);
          trips.emplace_back(col0 + c, row0 + r, v);
        }
      }
    }
  };
  if (m > 0) {
    add_block(form.A1, x_dim, 0);
    add_block(form.A2, x_dim, nt);
    add_block(form.A3, x_dim, 2 * nt);
    for (int r = 0; r < m; ++r) {
      trips.emplace_back(x_dim + r, x_dim + r, -1.0 / omega);
    }
  }
  if (meq > 0) {
    add_block(form.E1, x_dim + m, 0);
    add_block(form.E2, x_dim + m, nt);
    add_block(form.E3, x_dim + m, 2 * nt);
  }

  auto factor = std::make_shared<QpKktFactor>();
  factor->matrix.resize(dim, dim);
  factor->matrix.setFromTriplets(trips.begin(), trips.end());
  factor->matrix.makeCompressed();
  factor->lu.compute(factor->matrix);
  if (factor->lu.info() != Eigen::Success) {
    throw std::runtime_error(
        "qp_prox: singular step-1 KKT system (dim " + std::to_string(dim) +
        "); local variables must appear in Q or in some constraint row");
  }
  return factor;
}

QpProxWorkspace::QpProxWorkspace(const QpDeviceForm& form, double rho_p,
                                 double rho_theta, double omega)
    : QpProxWorkspace(form, rho_p, rho_theta, omega,
                      factorize_qp_kkt(form, rho_p, rho_theta, omega)) {}

QpProxWorkspace::QpProxWorkspace(const QpDeviceForm& form, double rho_p,
                                 double rho_theta, double omega,
                                 std::shared_ptr<const QpKktFactor> factor)
    : form_(form), rho_p_(rho_p), rho_theta_(rho_theta), omega_(omega),
      factor_(std::move(factor)) {
  slack_neg_ = Eigen::VectorXd::Zero(form_.num_ineq);
  dual_ = Eigen::VectorXd::Zero(form_.num_ineq);
  locals_ = Eigen::VectorXd::Zero(form_.num_locals);
}

void QpProxWorkspace::set_penalties(double rho_p, double rho_theta,
                                    double omega) {
  if (rho_p == rho_p_ && rho_theta == rho_theta_ && omega == omega_) return;
  adopt_factor(factorize_qp_kkt(form_, rho_p, rho_theta, omega), rho_p,
               rho_theta, omega);
}

void QpProxWorkspace::adopt_factor(std::shared_ptr<const QpKktFactor> factor,
                                   double rho_p, double rho_theta,
                                   double omega) {
  factor_ = std::move(factor);
  rho_p_ = rho_p;
  rho_theta_ = rho_theta;
  if (omega != omega_) {
    // lambda is the omega-scaled dual; keep the unscaled multiplier
    // continuous across the penalty change.
    dual_ *= omega_ / omega;
    omega_ = omega;
  }
}

void QpProxWorkspace::reset() {
  slack_neg_.setZero();
  dual_.setZero();
  locals_.setZero();
  inner_residual_ = 0.0;
}

double QpProxWorkspace::local_objective() const {
  if (form_.num_locals == 0) return 0.0;
  return locals_.dot(form_.Q * locals_) + form_.q.dot(locals_);
}

void QpProxWorkspace::solve(std::span<const double> target_p,
                            std::span<const double> target_theta, int iters,
                            std::span<double> p_out,
                            std::span<double> theta_out) {
  const int nt = form_.tau * form_.horizon;
  const int mu = form_.num_locals;
  const int m = form_.num_ineq;
  const int meq = form_.num_eq;
  const int dim = form_.kkt_dim();
  if (static_cast<int>(target_p.size()) != nt ||
      static_cast<int>(target_theta.size()) != nt) {
    throw std::invalid_argument("qp_prox: target dimension mismatch");
  }

  Eigen::VectorXd rhs(dim);
  for (int i = 0; i < nt; ++i) rhs[i] = rho_p_ * target_p[i];
  for (int i = 0; i < nt; ++i) rhs[nt + i] = rho_theta_ * target_theta[i];
  rhs.segment(2 * nt, mu) = -form_.q;
  if (meq > 0) rhs.tail(meq) = form_.e;

  Eigen::VectorXd sol(dim), alpha(m);
  for (int it = 0; it < iters; ++it) {
    if (m > 0) rhs.segment(2 * nt + mu, m) = form_.b + slack_neg_ - dual_;
    sol = factor_->lu.solve(rhs);
    if (m > 0) {
      alpha.noalias() = form_.A1 * sol.head(nt);
      alpha.noalias() += form_.A2 * sol.segment(nt, nt);
      if (mu > 0) alpha.noalias() += form_.A3 * sol.segment(2 * nt, mu);
      alpha -= form_.b;
      slack_neg_ = (alpha + dual_).cwiseMin(0.0);
      dual_ += alpha - slack_neg_;
      inner_residual_ = (alpha - slack_neg_).norm();
    } else {
      inner_residual_ = 0.0;
      // No inequalities: update 1 is exact, later iterations change nothing.
      break;
    }
  }
  if (mu > 0) locals_ = sol.segment(2 * nt, mu);
  for (int i = 0; i < nt; ++i) p_out[i] = sol[i];
  for (int i = 0; i < nt; ++i) theta_out[i] = sol[nt + i];
}

QpProxWorkspace build_workspace(const QpDeviceForm& form, double rho_p,
                                double rho_theta, double omega) {
  return QpProxWorkspace(form, rho_p, rho_theta, omega);
}

void qp_prox(QpProxWorkspace& ws, std::span<const double> target_p,
             std::span<const double> target_theta, int iters,
             std::span<double> p_out, std::span<double> theta_out) {
  if (iters < 1) throw std::invalid_argument("qp_prox: iters must be >= 1");
  ws.solve(target_p, target_theta, iters, p_out, theta_out);
}

QpDeviceForm battery_qp_form(double discharge_cost, double efficiency,
                             double power_capacity, double duration, int T) {
  if (power_capacity < 0 || duration < 0) {
    throw std::invalid_argument("battery: negative power capacity or duration");
  }
  if (!(efficiency > 0.0 && efficiency <= 1.0)) {
    throw std::invalid_argument("battery: efficiency must lie in (0, 1]");
  }
  QpDeviceForm f;
  f.tau = 1;
  f.horizon = T;
  const int mu = 3 * T + 1;   // charge, discharge, state of charge
  const int m = 6 * T + 2;    // box limits
  const int meq = 2 * T + 2;  // power link, dynamics, end conditions
  f.num_locals = mu;
  f.num_ineq = m;
  f.num_eq = meq;
  f.Q = Eigen::MatrixXd::Zero(mu, mu);
  f.q = Eigen::VectorXd::Zero(mu);
  for (int t = 0; t < T; ++t) f.q[T + t] = discharge_cost;
  f.A1 = Eigen::MatrixXd::Zero(m, T);
  f.A2 = Eigen::MatrixXd::Zero(m, T);
  f.A3 = Eigen::MatrixXd::Zero(m, mu);
  f.b = Eigen::VectorXd::Zero(m);
  f.E1 = Eigen::MatrixXd::Zero(meq, T);
  f.E2 = Eigen::MatrixXd::Zero(meq, T);
  f.E3 = Eigen::MatrixXd::Zero(meq, mu);
  f.e = Eigen::VectorXd::Zero(meq);

  const int c0 = 0, d0 = T, s0 = 2 * T;
  int row = 0;
  // p - discharge + charge = 0.
  for (int t = 0; t < T; ++t, ++row) {
    f.E1(row, t) = 1.0;
    f.E3(row, d0 + t) = -1.0;
    f.E3(row, c0 + t) = 1.0;
  }
  // soc[t+1] - soc[t] - eff*charge[t] + discharge[t] = 0.
  for (int t = 0; t < T; ++t, ++row) {
    f.E3(row, s0 + t + 1) = 1.0;
    f.E3(row, s0 + t) = -1.0;
    f.E3(row, c0 + t) = -efficiency;
    f.E3(row, d0 + t) = 1.0;
  }
  // Initial and final state of charge pinned to zero.
  f.E3(row++, s0) = 1.0;
  f.E3(row++, s0 + T) = 1.0;
  // Box limits go through the slack iteration.
  row = 0;
  for (int t = 0; t < T; ++t, ++row) { f.A3(row, c0 + t) = 1.0; f.b[row] = power_capacity; }
  for (int t = 0; t < T; ++t, ++row) { f.A3(row, c0 + t) = -1.0; }
  for (int t = 0; t < T; ++t, ++row) { f.A3(row, d0 + t) = 1.0; f.b[row] = power_capacity; }
  for (int t = 0; t < T; ++t, ++row) { f.A3(row, d0 + t) = -1.0; }
  for (int t = 0; t <= T; ++t, ++row) { f.A3(row, s0 + t) = 1.0; f.b[row] = duration * power_capacity; }
  for (int t = 0; t <= T; ++t, ++row) { f.A3(row, s0 + t) = -1.0; }
  return f;
}

}  // namespace gridmp
