#include "mafd/linearization.hpp"

#include <string>

#include "mafd/errors.hpp"

namespace mafd {

FlowJacobian flow_jacobian(const OperatingPoint& op, const ComplexMatrix& ybus) {
  const int n = static_cast<int>(ybus.rows());
  const auto d = injection_partials(op.state, ybus);
  FlowJacobian out{Eigen::MatrixXd::Zero(kChannelsPerBus * n, kStatesPerBus * n)};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      out.h(p_channel(i), state_index(k, kDeltaSlot)) = d.dp_ddelta(i, k);
      out.h(p_channel(i), state_index(k, kVoltageSlot)) = d.dp_dv(i, k);
      out.h(q_channel(i), state_index(k, kDeltaSlot)) = d.dq_ddelta(i, k);
      out.h(q_channel(i), state_index(k, kVoltageSlot)) = d.dq_dv(i, k);
    }
  }
  return out;
}

LinearMode linearize_mode(const SwitchedSystem& system, const SwitchMode& mode) {
  const int n = system.bus_count();
  if (mode.bus_count() != n) throw ValidationError("mode size mismatch");
  const int ns = system.state_dim();
  const int nc = system.channel_dim();
  const auto& net = system.network();

  LinearMode lm;
  lm.mode = mode;
  lm.a = Eigen::MatrixXd::Zero(ns, ns);
  lm.b1 = Eigen::MatrixXd::Zero(ns, nc);
  lm.b2 = Eigen::MatrixXd::Zero(ns, nc);
  lm.h = flow_jacobian(system.operating_point(), net.ybus()).h;

  for (int i = 0; i < n; ++i) {
    const auto& d = net.droop(i);
    const int id = state_index(i, kDeltaSlot);
    const int iw = state_index(i, kOmegaSlot);
    const int iv = state_index(i, kVoltageSlot);
    lm.a(iv, iv) = -d.d_v / d.j_v;
    lm.b1(iv, q_channel(i)) = -1.0 / d.j_v;
    lm.b2(iv, q_channel(i)) = 1.0 / d.j_v;
    if (mode.frequency_droop(i)) {
      lm.a(id, iw) = 1.0;
      lm.a(iw, iw) = -d.d_omega / d.j_omega;
      lm.b1(iw, p_channel(i)) = -1.0 / d.j_omega;
      lm.b2(iw, p_channel(i)) = 1.0 / d.j_omega;
    } else {
      lm.a(id, id) = -d.d_delta / d.j_delta;
      lm.b1(id, p_channel(i)) = -1.0 / d.j_delta;
      lm.b2(id, p_channel(i)) = 1.0 / d.j_delta;
    }
  }

  // Angle-droop frequency rows: substitute the angle/voltage rate rows into the
  // chain rule. Those rows never depend on a frequency-row, so order is safe.
  for (int i = 0; i < n; ++i) {
    if (mode.frequency_droop(i)) continue;
    const auto& d = net.droop(i);
    const int iw = state_index(i, kOmegaSlot);
    for (Eigen::MatrixXd* m : {&lm.a, &lm.b1, &lm.b2}) {
      Eigen::RowVectorXd row = -(d.d_delta / d.j_delta) * m->row(state_index(i, kDeltaSlot));
      for (int k = 0; k < n; ++k) {
        row -= (lm.h(p_channel(i), state_index(k, kDeltaSlot)) / d.j_delta) *
               m->row(state_index(k, kDeltaSlot));
        row -= (lm.h(p_channel(i), state_index(k, kVoltageSlot)) / d.j_delta) *
               m->row(state_index(k, kVoltageSlot));
      }
      m->row(iw) = row;
    }
  }

  const Eigen::MatrixXd coupled = lm.coupled_a();
  lm.c = Eigen::MatrixXd::Zero(nc, ns);
  lm.d = Eigen::MatrixXd::Zero(nc, nc);
  for (int i = 0; i < n; ++i) {
    const int src = state_index(i, mode.frequency_droop(i) ? kOmegaSlot : kDeltaSlot);
    lm.c.row(p_channel(i)) = coupled.row(src);
    lm.d.row(p_channel(i)) = lm.b2.row(src);
    lm.c(q_channel(i), state_index(i, kVoltageSlot)) = 1.0;
  }
  return lm;
}

std::vector<LinearMode> enumerate_modes(const SwitchedSystem& system, int cap) {
  const int n = system.bus_count();
  if (n > cap) {
    throw ValidationError("refusing to enumerate 2^" + std::to_string(n) +
                          " modes (cap is " + std::to_string(cap) + " buses)");
  }
  std::vector<LinearMode> modes;
  const std::uint32_t count = std::uint32_t{1} << n;
  modes.reserve(count);
  for (std::uint32_t idx = 0; idx < count; ++idx) {
    modes.push_back(linearize_mode(system, SwitchMode::from_index(n, idx)));
  }
  return modes;
}

Eigen::MatrixXd structurally_neutral_directions(const LinearMode& mode, double tol) {
  Eigen::MatrixXd stacked(mode.state_dim() + mode.output_dim(), mode.state_dim());
  stacked << mode.coupled_a(), mode.c;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double scale = s.size() > 0 ? std::max(s(0), 1.0) : 1.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol * scale) ++rank;
  }
  return svd.matrixV().rightCols(mode.state_dim() - rank);
}

}  // namespace mafd
