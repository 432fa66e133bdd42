#pragma once

#include <string>
#include <vector>

#include "gridmp/network.hpp"
#include "gridmp/solver.hpp"

namespace gridmp {

/// Addresses one differentiable parameter family across every group of a
/// kind. Supported selectors:
///   generator.p_max, generator.p_min  (entry per device and period)
///   generator.b                       (entry per device)
///   fixed_load.p_load                 (entry per device and period)
///   ac_line.capacity, dc_line.capacity (entry per device)
/// Entries address base-case parameters; n-1 contingency slices inherit
/// the dependence except for the outaged device.
struct ParameterSelector {
  DeviceKind kind = DeviceKind::generator;
  std::string param = "p_max";

  int size(const Network& net) const;
  std::vector<std::string> labels(const Network& net) const;
  bool per_period() const;
  static ParameterSelector parse(const std::string& text);
  std::string to_string() const;
};

/// Recorded forward run: a full-state checkpoint every checkpoint_every
/// iterations plus the penalty trajectory. Bitwise determinism of the
/// solver makes segment recomputation exact, so per-iteration detail is
/// re-derived during the reverse sweep instead of being stored.
struct Tape {
  SolverConfig config;
  int iterations = 0;
  int checkpoint_every = 50;
  std::vector<SolverState> checkpoints;  // state before iterations 1, C+1, ...
  std::vector<double> rho_p_per_iter;
  std::vector<double> rho_theta_per_iter;
  std::vector<double> rescale_u_per_iter;  // dual rescale applied after iter i
  std::vector<double> rescale_v_per_iter;
  SolverState final_state;
};

/// Runs exactly `iters` iterations (no early stopping) recording the tape.
/// Throws std::invalid_argument when the network contains kinds without a
/// piecewise-smooth analytic prox (battery, generic QP); use grad_fd there.
Tape solve_with_tape(const Network& net, const ContingencySpec& spec,
                     const SolverConfig& config, int iters,
                     const Solution* warm = nullptr, int checkpoint_every = 50);

/// Replays the tape forward from its first checkpoint; the result is
/// bitwise equal to the recorded final state.
SolverState replay(const Tape& tape, const Network& net,
                   const ContingencySpec& spec);

/// Objective both gradient paths differentiate: the problem cost of the
/// final iterate evaluated with the analytic device formulas (batteries by
/// an elastic inner dispatch so the value stays finite near feasibility).
double unrolled_objective(const Network& net, const ContingencySpec& spec,
                          const ScheduleTensor& p, const ScheduleTensor& theta);

/// Gradient of unrolled_objective(final iterate) with respect to the
/// selected parameters, by reverse traversal of the tape. Penalty
/// adaptation is differentiated through as recorded constants.
std::vector<double> grad(const Tape& tape, const Network& net,
                         const ContingencySpec& spec,
                         const ParameterSelector& wrt);

/// Central finite differences of the same objective through a solve with
/// the same fixed iteration count; supports every device kind. The step
/// for entry i is h * max(1, |x_i|).
std::vector<double> grad_fd(const Network& net, const ContingencySpec& spec,
                            const SolverConfig& config, int iters,
                            const ParameterSelector& wrt, double h = 1e-4,
                            const Solution* warm = nullptr);

/// Reads/writes the selected parameter entries (base case) on a network.
std::vector<double> get_params(const Network& net, const ParameterSelector& wrt);
void set_params(Network& net, const ParameterSelector& wrt,
                const std::vector<double>& values);

// --- Scalar direction/adjoint maps of the analytic proxes, exposed for the
// --- adjoint consistency tests.

double prox_generator_jvp(double a, double b, double lo, double hi, double x,
                          double rho, double dx, double db, double dlo,
                          double dhi);
void prox_generator_vjp(double a, double b, double lo, double hi, double x,
                        double rho, double p_adj, double* x_adj, double* b_adj,
                        double* lo_adj, double* hi_adj);

struct AcLineVec {
  double p1 = 0, p2 = 0, th1 = 0, th2 = 0;
};

AcLineVec prox_ac_line_jvp(double u, double b, double x1, double x2, double y1,
                           double y2, double rho_p, double rho_theta,
                           double dx1, double dx2, double dy1, double dy2,
                           double du);
void prox_ac_line_vjp(double u, double b, double x1, double x2, double y1,
                      double y2, double rho_p, double rho_theta,
                      const AcLineVec& seed, double* x1_adj, double* x2_adj,
                      double* y1_adj, double* y2_adj, double* u_adj);

void prox_dc_line_jvp(double u, double x1, double x2, double dx1, double dx2,
                      double du, double* dp1, double* dp2);
void prox_dc_line_vjp(double u, double x1, double x2, double p1_adj,
                      double p2_adj, double* x1_adj, double* x2_adj,
                      double* u_adj);

}  // namespace gridmp
