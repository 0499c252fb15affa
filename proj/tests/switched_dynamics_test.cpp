#include <gtest/gtest.h>

#include "mafd/errors.hpp"
#include "mafd/simulator.hpp"
#include "mafd/switched_dynamics.hpp"
#include "test_support.hpp"

namespace mafd {
namespace {

SwitchedSystem single_bus(const DroopParams& d) {
  BusSpec bus;
  bus.id = 1;
  bus.b_shunt = -1.0;
  NetworkModel net({bus}, {}, {d}, 377.0);
  return test::system_of(net);
}

TEST(SwitchMode, BitmaskRoundTrip) {
  for (int n = 1; n <= 5; ++n) {
    for (std::uint32_t idx = 0; idx < (1u << n); ++idx) {
      const SwitchMode m = SwitchMode::from_index(n, idx);
      EXPECT_EQ(m.index(), idx);
      for (int i = 0; i < n; ++i) EXPECT_EQ(m.sigma()[i], ((idx >> i) & 1u) ? 2 : 1);
      EXPECT_EQ(SwitchMode::from_sigma(m.sigma()), m);
    }
  }
  EXPECT_EQ(SwitchMode::from_sigma({2, 1, 2}).index(), 5u);
  EXPECT_THROW(SwitchMode::from_sigma({1, 3}), ValidationError);
  EXPECT_THROW(SwitchMode::from_index(2, 4), ValidationError);
}

TEST(SwitchedSystem, EquilibriumInEveryMode) {
  for (const NetworkModel& net : {test::case3(), test::case5()}) {
    const SwitchedSystem sys = test::system_of(net);
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.state_dim());
    const Eigen::VectorXd w = Eigen::VectorXd::Zero(sys.channel_dim());
    for (std::uint32_t m = 0; m < (1u << sys.bus_count()); ++m) {
      const SwitchMode mode = SwitchMode::from_index(sys.bus_count(), m);
      EXPECT_LE(sys.mode_rhs(x, w, mode).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE(sys.output_map(x, w, mode).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_LE(sys.power_coupling(x).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SwitchedSystem, FrequencyDroopSubstitution) {
  const SwitchedSystem sys = single_bus(test::droop(1.0, 1.0, 1.0, 2.0, 1.0, 1.0));
  const Eigen::Vector3d x(0.0, 0.1, 0.0);
  const Eigen::Vector2d w(0.5, 0.0);
  const SwitchMode mode = SwitchMode::from_sigma({2});
  const Eigen::VectorXd xdot = sys.mode_rhs(x, w, mode);
  EXPECT_NEAR(xdot(0), 0.1, 1e-15);
  EXPECT_NEAR(xdot(1), 0.3, 1e-15);
  EXPECT_NEAR(xdot(2), 0.0, 1e-15);
  const Eigen::VectorXd y = sys.output_map(x, w, mode);
  EXPECT_NEAR(y(0), 0.3, 1e-15);
  EXPECT_NEAR(y(1), 0.0, 1e-15);
}

TEST(SwitchedSystem, AngleDroopOutputIsAngleRate) {
  const NetworkModel net = test::case3();
  const SwitchedSystem sys = test::system_of(net);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(9);
  x << 0.01, 0.0, 0.002, -0.02, 0.0, 0.0, 0.0, 0.0, -0.003;
  Eigen::VectorXd w(6);
  w << 0.1, 0.05, -0.2, 0.0, 0.0, 0.3;
  const SwitchMode mode = SwitchMode::from_sigma({1, 1, 2});
  const Eigen::VectorXd u = sys.power_coupling(x);
  const Eigen::VectorXd y = sys.output_map(x, w, mode);
  for (int i = 0; i < 2; ++i) {
    const auto& d = net.droop(i);
    const double rhs = -d.d_delta * x(state_index(i, kDeltaSlot)) + w(p_channel(i)) - u(p_channel(i));
    EXPECT_NEAR(y(p_channel(i)), rhs / d.j_delta, 1e-14);
    EXPECT_EQ(y(q_channel(i)), x(state_index(i, kVoltageSlot)));
  }
}

TEST(SwitchedSystem, PowerCouplingMatchesReEvaluation) {
  const NetworkModel net = test::case3();
  const SwitchedSystem sys = test::system_of(net);
  const Injections ref = compute_injections(sys.operating_point().state, net.ybus());

  Eigen::VectorXd x = Eigen::VectorXd::Zero(9);
  x(state_index(1, kDeltaSlot)) = 0.01;
  GridState s = sys.operating_point().state;
  s.delta(1) += 0.01;
  Injections inj = compute_injections(s, net.ybus());
  Eigen::VectorXd u = sys.power_coupling(x);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(u(p_channel(i)), inj.p(i) - ref.p(i), 1e-12);
    EXPECT_NEAR(u(q_channel(i)), inj.q(i) - ref.q(i), 1e-12);
  }

  x.setZero();
  x(state_index(0, kVoltageSlot)) = -0.05;
  u = sys.power_coupling(x);
  s = sys.operating_point().state;
  s.v(0) -= 0.05;
  inj = compute_injections(s, net.ybus());
  EXPECT_NEAR(u(q_channel(0)), inj.q(0) - ref.q(0), 1e-12);
  EXPECT_LT(net.ybus()(0, 0).imag(), 0.0);
  EXPECT_LT(u(q_channel(0)), 0.0);
}

TEST(SwitchedSystem, AngleRateDerivativeAlongTrajectory) {
  const SwitchedSystem sys = test::system_of(test::case3());
  const SwitchMode mode = SwitchMode::all_angle(3);
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(6);
  Eigen::VectorXd x0(9);
  x0 << 0.02, 0.0, 0.01, -0.01, 0.0, -0.02, 0.015, 0.0, 0.005;
  const OdeRhs f = [&](double, const Eigen::VectorXd& x) { return sys.mode_rhs(x, w, mode); };
  // Largest gap between the central difference of the angle rate and the
  // frequency row over the first 0.5 s; it must shrink like h^2.
  auto gap = [&](double h) {
    const long steps = std::lround(0.5 / h);
    Eigen::VectorXd prev = x0;
    Eigen::VectorXd cur = rk4_step(f, 0.0, prev, h);
    double worst = 0.0;
    for (long k = 1; k < steps; ++k) {
      const Eigen::VectorXd next = rk4_step(f, k * h, cur, h);
      const Eigen::VectorXd rate_prev = f(0, prev);
      const Eigen::VectorXd rate_next = f(0, next);
      const Eigen::VectorXd rate = f(0, cur);
      for (int i = 0; i < 3; ++i) {
        const int id = state_index(i, kDeltaSlot);
        const double fd = (rate_next(id) - rate_prev(id)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - rate(state_index(i, kOmegaSlot))));
      }
      prev = cur;
      cur = next;
    }
    return worst;
  };
  const double coarse = gap(2e-3);
  const double fine = gap(1e-3);
  EXPECT_NEAR(coarse / fine, 4.0, 0.5);
  EXPECT_LT(fine, 5e-3);
}

TEST(SwitchedSystem, DimensionChecks) {
  const SwitchedSystem sys = test::system_of(test::case3());
  const SwitchMode mode = SwitchMode::all_angle(3);
  EXPECT_THROW(sys.mode_rhs(Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(6), mode),
               ValidationError);
  EXPECT_THROW(sys.mode_rhs(Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(5), mode),
               ValidationError);
  EXPECT_THROW(sys.mode_rhs(Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(6),
                            SwitchMode::all_angle(2)),
               ValidationError);
  EXPECT_THROW(sys.mode_rhs(Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(6), mode,
                            Eigen::VectorXd::Zero(3)),
               ValidationError);
}

}  // namespace
}  // namespace mafd
