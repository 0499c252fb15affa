#include "mafd/switched_dynamics.hpp"

#include <string>
#include <utility>

#include "mafd/errors.hpp"

namespace mafd {

SwitchMode SwitchMode::from_index(int bus_count, std::uint32_t index) {
  if (bus_count < 0 || bus_count > 31) throw ValidationError("bus count out of range for a mode mask");
  if (index >= (std::uint32_t{1} << bus_count)) {
    throw ValidationError("mode index " + std::to_string(index) + " out of range for " +
                          std::to_string(bus_count) + " buses");
  }
  SwitchMode mode;
  mode.index_ = index;
  mode.sigma_.resize(bus_count);
  for (int i = 0; i < bus_count; ++i) mode.sigma_[i] = ((index >> i) & 1U) ? 2 : 1;
  return mode;
}

SwitchMode SwitchMode::from_sigma(const std::vector<int>& sigma) {
  if (sigma.size() > 31) throw ValidationError("too many buses for a mode mask");
  std::uint32_t index = 0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] == 2) {
      index |= std::uint32_t{1} << i;
    } else if (sigma[i] != 1) {
      throw ValidationError("switching entries must be 1 or 2");
    }
  }
  return from_index(static_cast<int>(sigma.size()), index);
}

SwitchedSystem::SwitchedSystem(NetworkModel network, OperatingPoint op)
    : network_(std::move(network)), op_(std::move(op)) {
  const auto n = static_cast<Eigen::Index>(network_.size());
  if (op_.state.v.size() != n || op_.state.delta.size() != n || op_.p_inj.size() != n ||
      op_.q_inj.size() != n) {
    throw ValidationError("operating point does not match the network size");
  }
}

GridState SwitchedSystem::absolute_state(const Eigen::VectorXd& x) const {
  const int n = bus_count();
  GridState s = op_.state;
  for (int i = 0; i < n; ++i) {
    s.delta(i) += x(state_index(i, kDeltaSlot));
    s.v(i) += x(state_index(i, kVoltageSlot));
  }
  return s;
}

Eigen::VectorXd SwitchedSystem::power_coupling(const Eigen::VectorXd& x) const {
  if (x.size() != state_dim()) throw ValidationError("state dimension mismatch");
  const auto inj = compute_injections(absolute_state(x), network_.ybus());
  Eigen::VectorXd u(channel_dim());
  for (int i = 0; i < bus_count(); ++i) {
    u(p_channel(i)) = inj.p(i) - op_.p_inj(i);
    u(q_channel(i)) = inj.q(i) - op_.q_inj(i);
  }
  return u;
}

void SwitchedSystem::check_dims(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                                const SwitchMode& mode) const {
  if (x.size() != state_dim()) throw ValidationError("state dimension mismatch");
  if (w.size() != channel_dim()) throw ValidationError("disturbance dimension mismatch");
  if (mode.bus_count() != bus_count()) throw ValidationError("mode size mismatch");
}

Eigen::VectorXd SwitchedSystem::mode_rhs_with_injection(const Eigen::VectorXd& x,
                                                        const Eigen::VectorXd& u,
                                                        const Eigen::VectorXd& w,
                                                        const SwitchMode& mode) const {
  check_dims(x, w, mode);
  if (u.size() != channel_dim()) throw ValidationError("injection dimension mismatch");
  const int n = bus_count();
  Eigen::VectorXd xdot(state_dim());

  // Angle and voltage rows of every bus first.
  for (int i = 0; i < n; ++i) {
    const auto& d = network_.droop(i);
    const int id = state_index(i, kDeltaSlot);
    const int iw = state_index(i, kOmegaSlot);
    const int iv = state_index(i, kVoltageSlot);
    if (mode.frequency_droop(i)) {
      xdot(id) = x(iw);
    } else {
      xdot(id) = (-d.d_delta * x(id) + w(p_channel(i)) - u(p_channel(i))) / d.j_delta;
    }
    xdot(iv) = (-d.d_v * x(iv) + w(q_channel(i)) - u(q_channel(i))) / d.j_v;
  }

  bool any_angle = false;
  for (int i = 0; i < n; ++i) any_angle = any_angle || !mode.frequency_droop(i);
  InjectionPartials partials;
  if (any_angle) partials = injection_partials(absolute_state(x), network_.ybus());

  for (int i = 0; i < n; ++i) {
    const auto& d = network_.droop(i);
    const int iw = state_index(i, kOmegaSlot);
    if (mode.frequency_droop(i)) {
      xdot(iw) = (-d.d_omega * x(iw) + w(p_channel(i)) - u(p_channel(i))) / d.j_omega;
      continue;
    }
    double p_rate = 0.0;
    for (int k = 0; k < n; ++k) {
      p_rate += partials.dp_ddelta(i, k) * xdot(state_index(k, kDeltaSlot)) +
                partials.dp_dv(i, k) * xdot(state_index(k, kVoltageSlot));
    }
    xdot(iw) = -(d.d_delta / d.j_delta) * xdot(state_index(i, kDeltaSlot)) - p_rate / d.j_delta;
  }
  return xdot;
}

Eigen::VectorXd SwitchedSystem::mode_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                                         const SwitchMode& mode,
                                         const Eigen::VectorXd& u_sec) const {
  Eigen::VectorXd u = power_coupling(x);
  if (u_sec.size() != 0) {
    if (u_sec.size() != channel_dim()) throw ValidationError("secondary input dimension mismatch");
    u += u_sec;
  }
  return mode_rhs_with_injection(x, u, w, mode);
}

Eigen::VectorXd SwitchedSystem::output_from_rhs(const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& xdot_open,
                                                const SwitchMode& mode) const {
  const int n = bus_count();
  Eigen::VectorXd y(channel_dim());
  for (int i = 0; i < n; ++i) {
    const int slot = mode.frequency_droop(i) ? kOmegaSlot : kDeltaSlot;
    y(p_channel(i)) = xdot_open(state_index(i, slot));
    y(q_channel(i)) = x(state_index(i, kVoltageSlot));
  }
  return y;
}

Eigen::VectorXd SwitchedSystem::output_map(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                                           const SwitchMode& mode) const {
  return output_from_rhs(x, mode_rhs(x, w, mode), mode);
}

}  // namespace mafd
