#include <gtest/gtest.h>

#include <algorithm>

#include "mafd/errors.hpp"
#include "mafd/linearization.hpp"
#include "test_support.hpp"

namespace mafd {
namespace {

struct FdModel {
  Eigen::MatrixXd closed_a, b1, b2, c, d;
};

FdModel finite_differences(const SwitchedSystem& sys, const SwitchMode& mode) {
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(sys.state_dim());
  const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(sys.channel_dim());
  FdModel fd;
  fd.closed_a = test::jacobian_fd([&](const Eigen::VectorXd& x) { return sys.mode_rhs(x, w0, mode); }, x0);
  fd.b1 = test::jacobian_fd(
      [&](const Eigen::VectorXd& u) { return sys.mode_rhs_with_injection(x0, u, w0, mode); }, w0);
  fd.b2 = test::jacobian_fd([&](const Eigen::VectorXd& w) { return sys.mode_rhs(x0, w, mode); }, w0);
  fd.c = test::jacobian_fd([&](const Eigen::VectorXd& x) { return sys.output_map(x, w0, mode); }, x0);
  fd.d = test::jacobian_fd([&](const Eigen::VectorXd& w) { return sys.output_map(x0, w, mode); }, w0);
  return fd;
}

void expect_matches_fd(const SwitchedSystem& sys, const LinearMode& lm) {
  const FdModel fd = finite_differences(sys, lm.mode);
  EXPECT_LE(test::rel_error(lm.coupled_a(), fd.closed_a), 1e-6) << "mode " << lm.mode.index();
  EXPECT_LE(test::rel_error(lm.b1, fd.b1), 1e-6) << "mode " << lm.mode.index();
  EXPECT_LE(test::rel_error(lm.b2, fd.b2), 1e-6) << "mode " << lm.mode.index();
  EXPECT_LE(test::rel_error(lm.c, fd.c), 1e-6) << "mode " << lm.mode.index();
  EXPECT_LE(test::rel_error(lm.d, fd.d), 1e-6) << "mode " << lm.mode.index();
}

TEST(FlowJacobian, MatchesCouplingDifferences) {
  const SwitchedSystem sys = test::system_of(test::case3());
  const FlowJacobian j = flow_jacobian(sys.operating_point(), sys.network().ybus());
  const Eigen::MatrixXd fd = test::jacobian_fd(
      [&](const Eigen::VectorXd& x) { return sys.power_coupling(x); }, Eigen::VectorXd::Zero(9));
  EXPECT_LE(test::rel_error(j.h, fd), 1e-6);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(j.h.col(state_index(i, kOmegaSlot)).norm(), 0.0);
}

TEST(Linearization, EveryModeMatchesFiniteDifferences) {
  for (const NetworkModel& net : {test::case3(), test::case5()}) {
    const SwitchedSystem sys = test::system_of(net);
    for (const LinearMode& lm : enumerate_modes(sys)) expect_matches_fd(sys, lm);
  }
}

TEST(Linearization, AllFrequencyDroopBlocks) {
  const NetworkModel net = test::case5();
  const SwitchedSystem sys = test::system_of(net);
  const LinearMode lm = linearize_mode(sys, SwitchMode::from_index(5, 31));
  for (int i = 0; i < 5; ++i) {
    const auto& d = net.droop(i);
    Eigen::Matrix3d want;
    want << 0, 1, 0, 0, -d.d_omega / d.j_omega, 0, 0, 0, -d.d_v / d.j_v;
    EXPECT_LT((lm.a.block<3, 3>(3 * i, 3 * i) - want).cwiseAbs().maxCoeff(), 1e-14);
  }
  Eigen::MatrixXd off = lm.a;
  for (int i = 0; i < 5; ++i) off.block<3, 3>(3 * i, 3 * i).setZero();
  EXPECT_EQ(off.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Linearization, OutputStructure) {
  const SwitchedSystem sys = test::system_of(test::case3());
  for (const LinearMode& lm : enumerate_modes(sys)) {
    for (int i = 0; i < 3; ++i) {
      Eigen::RowVectorXd unit = Eigen::RowVectorXd::Zero(9);
      unit(state_index(i, kVoltageSlot)) = 1.0;
      EXPECT_EQ((lm.c.row(q_channel(i)) - unit).norm(), 0.0);
      EXPECT_EQ(lm.d.row(q_channel(i)).norm(), 0.0);
      const int slot = lm.mode.frequency_droop(i) ? kOmegaSlot : kDeltaSlot;
      EXPECT_LT((lm.c.row(p_channel(i)) - lm.coupled_a().row(state_index(i, slot))).norm(), 1e-12);
      EXPECT_LT((lm.d.row(p_channel(i)) - lm.b2.row(state_index(i, slot))).norm(), 1e-12);
    }
  }
}

TEST(Linearization, BusPermutationSymmetry) {
  const NetworkModel net = test::case3();
  const std::vector<int> order = {2, 0, 1};
  std::vector<BusSpec> buses;
  std::vector<DroopParams> droop;
  for (int i : order) {
    buses.push_back(net.buses()[i]);
    droop.push_back(net.droop(i));
  }
  const NetworkModel perm(buses, net.lines(), droop, net.omega_ref());
  const SwitchedSystem a = test::system_of(net);
  const SwitchedSystem b = test::system_of(perm);

  Eigen::MatrixXd ps = Eigen::MatrixXd::Zero(9, 9);
  Eigen::MatrixXd pc = Eigen::MatrixXd::Zero(6, 6);
  for (int k = 0; k < 3; ++k) {
    for (int s = 0; s < 3; ++s) ps(3 * k + s, 3 * order[k] + s) = 1.0;
    for (int s = 0; s < 2; ++s) pc(2 * k + s, 2 * order[k] + s) = 1.0;
  }
  for (std::uint32_t m = 0; m < 8; ++m) {
    const SwitchMode ma = SwitchMode::from_index(3, m);
    std::vector<int> sigma;
    for (int i : order) sigma.push_back(ma.sigma()[i]);
    const LinearMode la = linearize_mode(a, ma);
    const LinearMode lb = linearize_mode(b, SwitchMode::from_sigma(sigma));
    EXPECT_LT((ps * la.a * ps.transpose() - lb.a).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LT((ps * la.b1 * pc.transpose() - lb.b1).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LT((pc * la.c * ps.transpose() - lb.c).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LT((pc * la.h * ps.transpose() - lb.h).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Linearization, ModeCounts) {
  BusSpec bus;
  bus.id = 1;
  bus.b_shunt = -1.0;
  const SwitchedSystem one = test::system_of(NetworkModel({bus}, {}, {DroopParams{}}, 377.0));
  EXPECT_EQ(enumerate_modes(one).size(), 2u);
  const SwitchedSystem three = test::system_of(test::case3());
  const auto modes3 = enumerate_modes(three);
  ASSERT_EQ(modes3.size(), 8u);
  for (std::uint32_t m = 0; m < 8; ++m) EXPECT_EQ(modes3[m].mode.index(), m);
  EXPECT_EQ(enumerate_modes(test::system_of(test::case5())).size(), 32u);
  EXPECT_THROW(enumerate_modes(three, 2), ValidationError);
}

TEST(Linearization, NeutralDirections) {
  const SwitchedSystem sys = test::system_of(test::case3());
  const Eigen::MatrixXd all_angle = structurally_neutral_directions(linearize_mode(sys, SwitchMode::from_index(3, 0)));
  EXPECT_EQ(all_angle.cols(), 3);
  const Eigen::MatrixXd all_freq = structurally_neutral_directions(linearize_mode(sys, SwitchMode::from_index(3, 7)));
  ASSERT_EQ(all_freq.cols(), 1);
  Eigen::VectorXd ones_delta = Eigen::VectorXd::Zero(9);
  for (int i = 0; i < 3; ++i) ones_delta(state_index(i, kDeltaSlot)) = 1.0;
  ones_delta.normalize();
  EXPECT_NEAR(std::abs(all_freq.col(0).dot(ones_delta)), 1.0, 1e-7);
}

}  // namespace
}  // namespace mafd
