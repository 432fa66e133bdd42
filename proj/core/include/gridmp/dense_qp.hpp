#pragma once

#include <Eigen/Dense>

namespace gridmp {

/// Convex quadratic program
///   minimize    (1/2) x'Px + c'x
///   subject to  Ax = b,  Gx <= h.
/// P must be symmetric positive semidefinite. Either constraint block may be
/// empty (zero rows).
struct DenseQp {
  Eigen::MatrixXd P;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;

  int num_vars() const { return static_cast<int>(c.size()); }
};

enum class QpStatus { optimal, max_iter, infeasible };

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // inequality multipliers, z >= 0
  double objective = 0.0;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double kkt_residual = 0.0;    // scaled max of stationarity/feasibility/gap
  double infeasibility = 0.0;   // elastic measure, > 0 when status == infeasible
};

/// Dense primal-dual interior point method (Mehrotra predictor-corrector).
/// Deliberately simple and single-threaded; intended for desk-scale
/// reference solves, not performance.
QpResult solve_dense_qp(const DenseQp& qp, double tol = 1e-8, int max_iter = 100);

}  // namespace gridmp
