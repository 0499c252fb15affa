#include <gtest/gtest.h>

#include <cmath>

#include "mafd/errors.hpp"
#include "mafd/linearization.hpp"
#include "mafd/simulator.hpp"
#include "test_support.hpp"

namespace mafd {
namespace {

GainSchedule uniform_gains(int buses, const Eigen::MatrixXd& k) {
  GainSchedule g;
  for (std::uint32_t m = 0; m < (1u << buses); ++m) g.set(m, k);
  return g;
}

Scenario loss_scenario(double t_end, double w_amp) {
  Scenario sc;
  sc.t_end = t_end;
  sc.step = 1e-3;
  sc.switching = {{0.5, SwitchMode::from_sigma({2, 1, 2})}, {1.5, SwitchMode::from_sigma({1, 1, 1})}};
  sc.disturbance = {{0.6, Eigen::VectorXd::Constant(6, w_amp)}, {1.0, Eigen::VectorXd::Zero(6)}};
  sc.sat_p = Eigen::VectorXd::Constant(3, INFINITY);
  sc.sat_q = Eigen::VectorXd::Constant(3, INFINITY);
  return sc;
}

TEST(Rk4, FourthOrderOnSmoothProblem) {
  const OdeRhs f = [](double t, const Eigen::VectorXd& x) {
    Eigen::VectorXd d(2);
    d << x(1), -x(0) - 0.3 * x(1) + std::sin(t);
    return d;
  };
  const Eigen::Vector2d x0(1.0, 0.0);
  const Eigen::VectorXd a = integrate_rk4(f, 0.0, x0, 0.1, 20);
  const Eigen::VectorXd b = integrate_rk4(f, 0.0, x0, 0.05, 40);
  const Eigen::VectorXd c = integrate_rk4(f, 0.0, x0, 0.025, 80);
  const double ratio = (a - b).norm() / (b - c).norm();
  EXPECT_GT(ratio, 14.0);
  EXPECT_LT(ratio, 18.0);
}

TEST(Rk4, ExactForCubicPolynomials) {
  const OdeRhs f = [](double t, const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 3 * t * t); };
  const Eigen::VectorXd x = integrate_rk4(f, 0.0, Eigen::VectorXd::Zero(1), 0.25, 8);
  EXPECT_NEAR(x(0), 8.0, 1e-13);
}

TEST(Simulator, EquilibriumStaysPut) {
  const SwitchedSystem sys = test::system_of(test::case3());
  Scenario sc = loss_scenario(2.0, 0.0);
  const Trajectory traj = run_scenario(sys, uniform_gains(3, -0.5 * Eigen::MatrixXd::Identity(6, 6)), sc);
  EXPECT_FALSE(traj.diverged);
  EXPECT_EQ(traj.samples(), 2001);
  EXPECT_LE(traj.x.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(traj.mode[600], 5u);
  EXPECT_EQ(traj.mode[1600], 0u);
}

TEST(Simulator, LinearClosedLoopSteadyState) {
  // Decoupled surrogate closed loop x' = (A + B1 K C) x + B2 w.
  Eigen::MatrixXd a = -Eigen::Vector3d(1.0, 2.0, 3.0).asDiagonal().toDenseMatrix();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 2);
  b(0, 0) = 1.0;
  b(1, 1) = 1.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 3);
  c(0, 0) = 1.0;
  c(1, 2) = 1.0;
  Eigen::Matrix2d k;
  k << -0.5, 0.2, 0.1, -0.3;
  const Eigen::MatrixXd acl = a + b * k * c;
  const Eigen::Vector2d w(0.4, -0.2);
  const Eigen::VectorXd x_ss = -acl.partialPivLu().solve(b * w);
  const OdeRhs f = [&](double, const Eigen::VectorXd& x) -> Eigen::VectorXd { return acl * x + b * w; };
  const Eigen::VectorXd x = integrate_rk4(f, 0.0, Eigen::VectorXd::Zero(3), 1e-2, 1000);
  EXPECT_LT((x - x_ss).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Simulator, Deterministic) {
  const SwitchedSystem sys = test::system_of(test::case3());
  const GainSchedule g = uniform_gains(3, -0.3 * Eigen::MatrixXd::Identity(6, 6));
  const Scenario sc = loss_scenario(2.0, 0.2);
  const Trajectory a = run_scenario(sys, g, sc);
  const Trajectory b = run_scenario(sys, g, sc);
  EXPECT_EQ((a.x - b.x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.y - b.y).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(a.x.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Simulator, SaturationBoundsSecondaryInput) {
  const SwitchedSystem sys = test::system_of(test::case3());
  Scenario sc = loss_scenario(1.6, 0.75);
  sc.sat_p = Eigen::VectorXd::Constant(3, 0.05);
  sc.sat_q = Eigen::VectorXd::Constant(3, 0.02);
  const Trajectory traj = run_scenario(sys, uniform_gains(3, -2.0 * Eigen::MatrixXd::Identity(6, 6)), sc);
  double over = 0.0;
  for (int k = 0; k < traj.samples(); ++k) {
    for (int i = 0; i < 3; ++i) {
      EXPECT_LE(std::abs(traj.u_sec(k, p_channel(i))), 0.05 + 1e-15);
      EXPECT_LE(std::abs(traj.u_sec(k, q_channel(i))), 0.02 + 1e-15);
      over = std::max(over, std::abs(traj.u_pre(k, p_channel(i))) - 0.05);
    }
  }
  EXPECT_GT(over, 0.0);
}

TEST(Simulator, ComparatorWithoutLossMatches) {
  const SwitchedSystem sys = test::system_of(test::case3());
  Scenario sc = loss_scenario(1.5, 0.3);
  sc.switching.clear();
  const GainSchedule g = uniform_gains(3, -0.4 * Eigen::MatrixXd::Identity(6, 6));
  const Trajectory a = run_scenario(sys, g, sc);
  const Trajectory b = run_comparator(sys, g, sc);
  EXPECT_EQ((a.x - b.x).cwiseAbs().maxCoeff(), 0.0);
  sc.comparator = Controller::kAngleDroopHold;
  EXPECT_EQ((run(sys, g, sc).x - b.x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Simulator, ComparatorHoldAtEquilibrium) {
  const SwitchedSystem sys = test::system_of(test::case3());
  const Trajectory traj =
      run_comparator(sys, uniform_gains(3, -0.4 * Eigen::MatrixXd::Identity(6, 6)), loss_scenario(2.0, 0.0));
  EXPECT_LE(traj.x.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Simulator, Validation) {
  const SwitchedSystem sys = test::system_of(test::case3());
  Scenario sc = loss_scenario(2.0, 0.1);
  sc.switching[0].t = 0.5005;
  EXPECT_THROW(sc.validate(3), ValidationError);
  sc = loss_scenario(2.0, 0.1);
  sc.disturbance[1].t = 0.6;
  EXPECT_THROW(sc.validate(3), ValidationError);
  sc = loss_scenario(0.0, 0.1);
  EXPECT_THROW(sc.validate(3), ValidationError);
  sc = loss_scenario(2.0, 0.1);
  sc.sat_q(1) = -1.0;
  EXPECT_THROW(sc.validate(3), ValidationError);

  GainSchedule partial;
  partial.set(0, Eigen::MatrixXd::Zero(6, 6));
  EXPECT_THROW(run_scenario(sys, partial, loss_scenario(2.0, 0.1)), ValidationError);
  EXPECT_THROW(run_scenario(sys, uniform_gains(3, Eigen::MatrixXd::Zero(4, 4)), loss_scenario(2.0, 0.1)),
               DimensionError);
}

TEST(Simulator, DivergenceTruncates) {
  const SwitchedSystem sys = test::system_of(test::case3());
  Scenario sc = loss_scenario(20.0, 0.5);
  const Trajectory traj = run_scenario(sys, uniform_gains(3, 20.0 * Eigen::MatrixXd::Identity(6, 6)), sc);
  EXPECT_TRUE(traj.diverged);
  EXPECT_LT(traj.samples(), 20001);
}

TEST(Simulator, ScenarioJsonRoundTrip) {
  const Scenario sc = load_scenario(test::data_path("scenarios/case1.json"), 3);
  EXPECT_DOUBLE_EQ(sc.t_end, 20.0);
  EXPECT_EQ(sc.mode_at(4000, 3).index(), 5u);
  EXPECT_EQ(sc.mode_at(3999, 3).index(), 0u);
  EXPECT_EQ(sc.mode_at(12000, 3).index(), 0u);
  EXPECT_DOUBLE_EQ(sc.disturbance_at(5000, 3)(3), 0.75);
  EXPECT_DOUBLE_EQ(sc.disturbance_at(8000, 3)(3), 0.0);
  const Scenario back = parse_scenario(scenario_to_json(sc), 3);
  EXPECT_EQ(back.step_count(), sc.step_count());
  EXPECT_EQ(back.switching.size(), sc.switching.size());
  EXPECT_DOUBLE_EQ(back.sat_p(2), 5.0);
  EXPECT_THROW(parse_scenario(R"({"t_end": 1, "bogus": 2})", 3), ParseError);
}

}  // namespace
}  // namespace mafd
