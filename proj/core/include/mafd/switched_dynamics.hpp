#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mafd/grid_model.hpp"
#include "mafd/power_flow.hpp"

namespace mafd {

/// Primary control law active at one microgrid.
enum class DroopMode : int { kAngle = 1, kFrequency = 2 };

/// Joint switching mode. Bit i of the index is set iff bus i runs frequency
/// droop (sigma_i = 2).
class SwitchMode {
 public:
  SwitchMode() = default;
  static SwitchMode from_index(int bus_count, std::uint32_t index);
  /// Entries must be 1 or 2.
  static SwitchMode from_sigma(const std::vector<int>& sigma);
  static SwitchMode all_angle(int bus_count) { return from_index(bus_count, 0); }

  int bus_count() const { return static_cast<int>(sigma_.size()); }
  std::uint32_t index() const { return index_; }
  const std::vector<int>& sigma() const { return sigma_; }
  DroopMode at(int bus) const { return static_cast<DroopMode>(sigma_.at(bus)); }
  bool frequency_droop(int bus) const { return at(bus) == DroopMode::kFrequency; }

  friend bool operator==(const SwitchMode& a, const SwitchMode& b) {
    return a.sigma_ == b.sigma_;
  }

 private:
  std::vector<int> sigma_;
  std::uint32_t index_ = 0;
};

// Stacked vector layout. States are per-bus blocks [d_delta, d_omega, d_v];
// inputs, disturbances and outputs are per-bus pairs [P, Q].
inline constexpr int kDeltaSlot = 0;
inline constexpr int kOmegaSlot = 1;
inline constexpr int kVoltageSlot = 2;
inline constexpr int kStatesPerBus = 3;
inline constexpr int kChannelsPerBus = 2;
inline constexpr int state_index(int bus, int slot) { return kStatesPerBus * bus + slot; }
inline constexpr int p_channel(int bus) { return kChannelsPerBus * bus; }
inline constexpr int q_channel(int bus) { return kChannelsPerBus * bus + 1; }

/// Nonlinear switched model of the droop-controlled network about a
/// power-flow operating point:
///   x' = f_sigma(x, u, w),  y = g_sigma(x, w),  u = h(x).
class SwitchedSystem {
 public:
  SwitchedSystem(NetworkModel network, OperatingPoint op);

  int bus_count() const { return network_.size(); }
  int state_dim() const { return kStatesPerBus * bus_count(); }
  int channel_dim() const { return kChannelsPerBus * bus_count(); }
  const NetworkModel& network() const { return network_; }
  const OperatingPoint& operating_point() const { return op_; }

  /// Absolute grid state at reference + deviation.
  GridState absolute_state(const Eigen::VectorXd& x) const;

  /// h(x): injection deviations [dP_inj, dQ_inj] relative to the operating point.
  Eigen::VectorXd power_coupling(const Eigen::VectorXd& x) const;

  /// f_sigma(x, u, w) with the injection deviation u given explicitly.
  /// Angle/voltage rows are evaluated first; angle-droop frequency rows then
  /// propagate d/dt of the angle rate, with dP_inj/dt obtained by the chain
  /// rule through the injection partials at the current absolute state.
  Eigen::VectorXd mode_rhs_with_injection(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& w, const SwitchMode& mode) const;

  /// f_sigma(x, h(x) + u_sec, w). An empty `u_sec` means no secondary input.
  Eigen::VectorXd mode_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                           const SwitchMode& mode,
                           const Eigen::VectorXd& u_sec = Eigen::VectorXd()) const;

  /// g_sigma(x, w): per bus [angle rate or frequency rate, d_v], evaluated on
  /// the open-loop right-hand side (no secondary input).
  Eigen::VectorXd output_map(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                             const SwitchMode& mode) const;

  /// Same as output_map when the open-loop right-hand side is already known.
  Eigen::VectorXd output_from_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& xdot_open,
                                  const SwitchMode& mode) const;

 private:
  void check_dims(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                  const SwitchMode& mode) const;

  NetworkModel network_;
  OperatingPoint op_;
};

}  // namespace mafd
