#include "mafd/power_flow.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mafd/errors.hpp"

namespace mafd {

Injections compute_injections(const GridState& state, const ComplexMatrix& ybus) {
  const Eigen::Index n = ybus.rows();
  Injections out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto y = ybus(j, k);
      if (y == std::complex<double>(0.0, 0.0)) continue;
      const double mag = std::abs(y);
      const double ang = std::arg(y);
      const double djk = state.delta(j) - state.delta(k);
      const double vv = state.v(j) * state.v(k) * mag;
      out.p(j) += vv * std::sin(djk + kHalfPi - ang);
      out.q(j) += vv * std::sin(djk - ang);
    }
  }
  return out;
}

InjectionPartials injection_partials(const GridState& state, const ComplexMatrix& ybus) {
  const Eigen::Index n = ybus.rows();
  InjectionPartials d{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                      Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto y = ybus(j, k);
      if (y == std::complex<double>(0.0, 0.0)) continue;
      const double mag = std::abs(y);
      const double phase = state.delta(j) - state.delta(k) - std::arg(y);
      const double c = mag * std::cos(phase);
      const double s = mag * std::sin(phase);
      const double vj = state.v(j);
      const double vk = state.v(k);
      if (j == k) {
        // delta_jj = 0, so the self term only depends on V_j.
        d.dp_dv(j, j) += 2.0 * vj * c;
        d.dq_dv(j, j) += 2.0 * vj * s;
        continue;
      }
      d.dp_ddelta(j, j) -= vj * vk * s;
      d.dp_ddelta(j, k) += vj * vk * s;
      d.dq_ddelta(j, j) += vj * vk * c;
      d.dq_ddelta(j, k) -= vj * vk * c;
      d.dp_dv(j, j) += vk * c;
      d.dp_dv(j, k) += vj * c;
      d.dq_dv(j, j) += vk * s;
      d.dq_dv(j, k) += vj * s;
    }
  }
  return d;
}

OperatingPoint solve_power_flow(const NetworkModel& network, const PowerFlowOptions& options) {
  const int n = network.size();
  const int slack = network.index_of(options.slack_id);
  const auto& buses = network.buses();

  GridState state{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n)};
  state.v(slack) = buses[slack].v_ref;
  state.delta(slack) = buses[slack].delta_ref;

  Eigen::VectorXd p_spec(n), q_spec(n);
  for (int i = 0; i < n; ++i) {
    p_spec(i) = buses[i].p_inj_ref;
    q_spec(i) = buses[i].q_inj_ref;
  }

  // Unknowns: angles then magnitudes of the non-slack buses.
  std::vector<int> pq;
  for (int i = 0; i < n; ++i) {
    if (i != slack) pq.push_back(i);
  }
  const int m = static_cast<int>(pq.size());

  auto mismatch = [&](const Injections& inj) {
    Eigen::VectorXd f(2 * m);
    for (int r = 0; r < m; ++r) {
      f(r) = p_spec(pq[r]) - inj.p(pq[r]);
      f(m + r) = q_spec(pq[r]) - inj.q(pq[r]);
    }
    return f;
  };

  OperatingPoint op;
  op.slack = slack;
  Injections inj = compute_injections(state, network.ybus());
  Eigen::VectorXd f = mismatch(inj);
  int iter = 0;
  while (m > 0 && f.lpNorm<Eigen::Infinity>() > options.tol) {
    if (iter >= options.max_iter) {
      throw NumericError("power flow did not converge in " + std::to_string(options.max_iter) +
                         " iterations (mismatch " + std::to_string(f.lpNorm<Eigen::Infinity>()) +
                         ")");
    }
    const auto d = injection_partials(state, network.ybus());
    Eigen::MatrixXd jac(2 * m, 2 * m);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) {
        jac(r, c) = d.dp_ddelta(pq[r], pq[c]);
        jac(r, m + c) = d.dp_dv(pq[r], pq[c]);
        jac(m + r, c) = d.dq_ddelta(pq[r], pq[c]);
        jac(m + r, m + c) = d.dq_dv(pq[r], pq[c]);
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) throw NumericError("singular power-flow Jacobian");
    const Eigen::VectorXd step = lu.solve(f);
    for (int r = 0; r < m; ++r) {
      state.delta(pq[r]) += step(r);
      state.v(pq[r]) += step(m + r);
    }
    if (!state.v.allFinite() || (state.v.array() <= 0.0).any()) {
      throw NumericError("power-flow iterate left the positive-voltage region");
    }
    inj = compute_injections(state, network.ybus());
    f = mismatch(inj);
    ++iter;
  }

  op.state = state;
  op.p_inj = inj.p;
  op.q_inj = inj.q;
  op.residual = m > 0 ? f.lpNorm<Eigen::Infinity>() : 0.0;
  op.iterations = iter;
  return op;
}

std::vector<BusSpec> calibrate_bus_shunts(const std::vector<BusSpec>& buses,
                                          const std::vector<LineSpec>& lines) {
  std::vector<BusSpec> out = buses;
  for (auto& b : out) {
    b.g_shunt = 0.0;
    b.b_shunt = 0.0;
  }
  const ComplexMatrix y = assemble_ybus(out, lines);
  const int n = static_cast<int>(out.size());
  GridState st{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    if (!(out[i].v_ref > 0.0)) throw ValidationError("calibration: v_ref must be > 0");
    st.v(i) = out[i].v_ref;
    st.delta(i) = out[i].delta_ref;
  }
  const Injections inj = compute_injections(st, y);
  for (int i = 0; i < n; ++i) {
    const double v2 = st.v(i) * st.v(i);
    out[i].g_shunt = (out[i].p_inj_ref - inj.p(i)) / v2;
    out[i].b_shunt = -(out[i].q_inj_ref - inj.q(i)) / v2;
  }
  return out;
}

}  // namespace mafd
