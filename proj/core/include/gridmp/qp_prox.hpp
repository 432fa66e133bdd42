#pragma once

#include <memory>
#include <span>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gridmp {

/// Device cost in quadratic-program form:
///   f(p, theta) = min_s  s'Qs + q's  s.t.  A1 p + A2 theta + A3 s <= b,
/// with p and theta flattened to tau*T vectors. Structural equalities
/// (E1 p + E2 theta + E3 s = e) may be split out of the inequality block;
/// they are enforced exactly inside the step-1 solve instead of passing
/// through the slack iteration, which converges much faster for
/// equality-heavy devices like batteries.
struct QpDeviceForm {
  int tau = 1;
  int horizon = 1;   // T
  int num_locals = 0;       // mu
  int num_ineq = 0;         // m
  int num_eq = 0;           // rows of the hard-equality block
  Eigen::MatrixXd Q;        // mu x mu, PSD
  Eigen::VectorXd q;        // mu
  Eigen::MatrixXd A1;       // m x tau*T
  Eigen::MatrixXd A2;       // m x tau*T
  Eigen::MatrixXd A3;       // m x mu
  Eigen::VectorXd b;        // m
  Eigen::MatrixXd E1;       // num_eq x tau*T
  Eigen::MatrixXd E2;       // num_eq x tau*T
  Eigen::MatrixXd E3;       // num_eq x mu
  Eigen::VectorXd e;        // num_eq

  int num_schedule_vars() const { return 2 * tau * horizon; }
  int kkt_dim() const {
    return num_schedule_vars() + num_locals + num_ineq + num_eq;
  }
};

/// Factorization of the step-1 bordered KKT system
///   [ H   A' ] [x]   [ g ]
///   [ A -I/w ] [y] = [ b + beta - lambda ],
/// where H = diag(rho_p I, rho_theta I, Q + Q') and A = [A1 A2 A3]. The
/// matrix depends only on the form's left-hand blocks and the penalties, so
/// devices with identical blocks (q and b differ only in the right-hand
/// side) can share one factor.
struct QpKktFactor {
  Eigen::SparseMatrix<double> matrix;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
};

/// Throws std::runtime_error with a conditioning note when the system is
/// singular.
std::shared_ptr<const QpKktFactor> factorize_qp_kkt(const QpDeviceForm& form,
                                                    double rho_p,
                                                    double rho_theta,
                                                    double omega);

/// Per-device inner-ADMM state plus a (possibly shared) cached KKT factor.
class QpProxWorkspace {
 public:
  QpProxWorkspace(const QpDeviceForm& form, double rho_p, double rho_theta,
                  double omega);
  QpProxWorkspace(const QpDeviceForm& form, double rho_p, double rho_theta,
                  double omega, std::shared_ptr<const QpKktFactor> factor);

  /// Runs `iters` inner iterations from the persisted (beta, lambda) state:
  /// (1) cached KKT solve, (2) beta = min(alpha + lambda, 0),
  /// (3) lambda += alpha - beta. Returns the final (p, theta).
  void solve(std::span<const double> target_p, std::span<const double> target_theta,
             int iters, std::span<double> p_out, std::span<double> theta_out);

  /// Rebuilds (or adopts) the factorization for new penalties; inner
  /// iterates are kept as a warm start.
  void set_penalties(double rho_p, double rho_theta, double omega);
  void adopt_factor(std::shared_ptr<const QpKktFactor> factor, double rho_p,
                    double rho_theta, double omega);

  /// Zeroes the persisted inner iterates (cold start).
  void reset();

  const QpDeviceForm& form() const { return form_; }
  const Eigen::VectorXd& locals() const { return locals_; }
  const Eigen::VectorXd& slack_neg() const { return slack_neg_; }
  /// ||alpha - beta||_2 after the most recent iteration.
  double inner_residual() const { return inner_residual_; }
  /// Inner objective q's + s'Qs of the current local variables.
  double local_objective() const;

 private:
  QpDeviceForm form_;
  double rho_p_, rho_theta_, omega_;
  std::shared_ptr<const QpKktFactor> factor_;
  Eigen::VectorXd slack_neg_;   // beta <= 0
  Eigen::VectorXd dual_;        // lambda
  Eigen::VectorXd locals_;      // s from the last update-1 solve
  double inner_residual_ = 0.0;
};

QpProxWorkspace build_workspace(const QpDeviceForm& form, double rho_p,
                                double rho_theta, double omega);

void qp_prox(QpProxWorkspace& ws, std::span<const double> target_p,
             std::span<const double> target_theta, int iters,
             std::span<double> p_out, std::span<double> theta_out);

/// Battery program in QpDeviceForm shape. Local variables are
/// (charge[T], discharge[T], soc[T+1]), mu = 3T + 1; every equality is
/// encoded as a pair of inequalities, m = 10T + 6.
QpDeviceForm battery_qp_form(double discharge_cost, double efficiency,
                             double power_capacity, double duration, int T);

}  // namespace gridmp
