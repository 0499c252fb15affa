#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mafd/grid_model.hpp"

namespace mafd {

/// Absolute bus voltages: magnitudes (p.u.) and angles (rad).
struct GridState {
  Eigen::VectorXd v;
  Eigen::VectorXd delta;
};

struct Injections {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};

/// Partial derivatives of the injections with respect to the bus angles and
/// voltage magnitudes, each n x n with row = injecting bus.
struct InjectionPartials {
  Eigen::MatrixXd dp_ddelta;
  Eigen::MatrixXd dp_dv;
  Eigen::MatrixXd dq_ddelta;
  Eigen::MatrixXd dq_dv;
};

/// Net injections in polar form,
///   P_j = sum_k V_j V_k |Y_jk| sin(delta_jk + pi/2 - angle(Y_jk))
///   Q_j = sum_k V_j V_k |Y_jk| sin(delta_jk - angle(Y_jk)),
/// summed over the nonzero entries of row j (self term included).
Injections compute_injections(const GridState& state, const ComplexMatrix& ybus);

/// Closed-form partials of compute_injections at `state`.
InjectionPartials injection_partials(const GridState& state, const ComplexMatrix& ybus);

struct PowerFlowOptions {
  int slack_id = 1;
  double tol = 1e-8;
  int max_iter = 30;
};

/// Converged power-flow solution.
struct OperatingPoint {
  GridState state;
  Eigen::VectorXd p_inj;
  Eigen::VectorXd q_inj;
  /// Max absolute P/Q mismatch at the specified (non-slack) buses.
  double residual = 0.0;
  int iterations = 0;
  int slack = 0;  // bus position, not id
};

/// Newton-Raphson from a flat start (V = 1, delta = 0) with the slack bus held
/// at its reference magnitude and angle. Every other bus is a PQ bus whose
/// specified injection is its (p_inj_ref, q_inj_ref). Throws NumericError on
/// a singular Jacobian or when max_iter is exhausted.
OperatingPoint solve_power_flow(const NetworkModel& network, const PowerFlowOptions& options = {});

/// Returns `buses` with g_shunt/b_shunt replaced so that the reference state
/// (v_ref, delta_ref) reproduces (p_inj_ref, q_inj_ref) exactly. The
/// injections are linear in the bus shunt at a fixed state:
///   g_sh = (P_ref - P_lines) / V^2,  b_sh = -(Q_ref - Q_lines) / V^2.
std::vector<BusSpec> calibrate_bus_shunts(const std::vector<BusSpec>& buses,
                                          const std::vector<LineSpec>& lines);

}  // namespace mafd
