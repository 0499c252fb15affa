#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mafd/switched_dynamics.hpp"

namespace mafd {

/// Power-flow Jacobian H (2n x 3n): rows [dP_i, dQ_i], columns
/// [d_delta_k, d_omega_k, d_v_k]. The frequency columns are identically zero.
struct FlowJacobian {
  Eigen::MatrixXd h;
};

FlowJacobian flow_jacobian(const OperatingPoint& op, const ComplexMatrix& ybus);

/// First-order model of one switching mode about the origin:
///   x' = A x + B1 u + B2 w,  y = C x + D w,  u = H x.
/// C and D differentiate the output map with u = h(x) substituted.
struct LinearMode {
  SwitchMode mode;
  Eigen::MatrixXd a;
  Eigen::MatrixXd b1;
  Eigen::MatrixXd b2;
  Eigen::MatrixXd c;
  Eigen::MatrixXd d;
  Eigen::MatrixXd h;

  int state_dim() const { return static_cast<int>(a.rows()); }
  int input_dim() const { return static_cast<int>(b1.cols()); }
  int disturbance_dim() const { return static_cast<int>(b2.cols()); }
  int output_dim() const { return static_cast<int>(c.rows()); }

  /// A + B1 H.
  Eigen::MatrixXd coupled_a() const { return a + b1 * h; }
};

LinearMode linearize_mode(const SwitchedSystem& system, const SwitchMode& mode);

inline constexpr int kDefaultModeCap = 10;

/// One linearization per bitmask 0 .. 2^n - 1. Throws ValidationError above `cap` buses.
std::vector<LinearMode> enumerate_modes(const SwitchedSystem& system, int cap = kDefaultModeCap);

/// Basis (columns) of the state directions v with (A + B1 H) v = 0 and C v = 0.
/// Output feedback can neither move nor observe them.
Eigen::MatrixXd structurally_neutral_directions(const LinearMode& mode, double tol = 1e-9);

}  // namespace mafd
