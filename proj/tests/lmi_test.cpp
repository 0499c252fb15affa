#include <gtest/gtest.h>

#include <random>

#include "mafd/errors.hpp"
#include "mafd/lmi.hpp"

namespace mafd {
namespace {

// X = [[z0, z1], [z1, z2]].
AffineMatrix symmetric_2x2() {
  AffineMatrix f;
  f.f0 = Eigen::Matrix2d::Zero();
  f.vars = {0, 1, 2};
  Eigen::Matrix2d e0, e1, e2;
  e0 << 1, 0, 0, 0;
  e1 << 0, 1, 1, 0;
  e2 << 0, 0, 0, 1;
  f.coeffs = {e0, e1, e2};
  return f;
}

TEST(PsdSqrt, ClosedForms) {
  EXPECT_LT((psd_sqrt(Eigen::Matrix3d::Identity()) - Eigen::Matrix3d::Identity()).norm(), 1e-15);
  const Eigen::MatrixXd r = psd_sqrt(Eigen::Vector2d(4.0, 9.0).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(r(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(r(1, 1), 3.0, 1e-14);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-14);
}

TEST(PsdSqrt, RandomSpdSquaresBack) {
  std::mt19937 rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    const Eigen::MatrixXd spd = m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd r = psd_sqrt(spd);
    EXPECT_LT((r * r - spd).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, spd.norm()));
    EXPECT_LT((r - r.transpose()).norm(), 1e-12);
    EXPECT_GT(min_eigenvalue(r), 0.0);
  }
}

TEST(PsdSqrt, Rejections) {
  Eigen::Matrix2d asym;
  asym << 1, 0.5, 0, 1;
  EXPECT_THROW(psd_sqrt(asym), ValidationError);
  EXPECT_THROW(psd_sqrt(Eigen::Vector2d(1.0, -1.0).asDiagonal().toDenseMatrix()), ValidationError);
  const Eigen::MatrixXd tiny = Eigen::Vector2d(1.0, -1e-12).asDiagonal();
  EXPECT_NEAR(psd_sqrt(tiny)(1, 1), 0.0, 1e-15);
}

TEST(Feasibility, IdentityFixedByEquality) {
  LmiProblem prob;
  prob.variable_count = 3;
  prob.add(symmetric_2x2(), "X");
  prob.eq_a = Eigen::Matrix3d::Identity();
  prob.eq_b = Eigen::Vector3d(1.0, 0.0, 1.0);
  const FeasibilityReport rep = solve_feasibility(prob);
  ASSERT_TRUE(rep.found()) << rep.message;
  EXPECT_NEAR(rep.z(0), 1.0, 1e-8);
  EXPECT_NEAR(rep.z(1), 0.0, 1e-8);
  EXPECT_NEAR(rep.z(2), 1.0, 1e-8);
  EXPECT_GE(rep.min_margin, 1e-6);
  EXPECT_LE(rep.eq_residual, 1e-8);
}

TEST(Feasibility, ContradictionNotFound) {
  LmiProblem prob;
  prob.variable_count = 3;
  prob.add(symmetric_2x2(), "X");
  prob.eq_a = Eigen::RowVector3d(1.0, 0.0, 0.0);
  prob.eq_b = Eigen::VectorXd::Constant(1, -1.0);
  const FeasibilityReport rep = solve_feasibility(prob);
  EXPECT_FALSE(rep.found());
  EXPECT_LT(rep.min_margin, 0.0);
}

TEST(Feasibility, InequalityOnlyInterior) {
  // X >= margin with X11 + X22 <= 1 encoded as 1 - X11 - X22 >= margin.
  LmiProblem prob;
  prob.variable_count = 3;
  prob.add(symmetric_2x2());
  AffineMatrix trace;
  trace.f0 = Eigen::MatrixXd::Constant(1, 1, 1.0);
  trace.vars = {0, 2};
  trace.coeffs = {Eigen::MatrixXd::Constant(1, 1, -1.0), Eigen::MatrixXd::Constant(1, 1, -1.0)};
  prob.add(trace);
  const FeasibilityReport rep = solve_feasibility(prob);
  ASSERT_TRUE(rep.found()) << rep.message;
  const std::vector<double> m = constraint_margins(prob, rep.z);
  for (double v : m) EXPECT_GE(v, 1e-6);
}

TEST(Feasibility, AffineProbeMatchesFunction) {
  const auto f = [](const Eigen::VectorXd& z) {
    Eigen::Matrix2d m;
    m << 1 + 2 * z(0), z(2), z(2), -z(0) + 3 * z(1);
    return Eigen::MatrixXd(m);
  };
  const AffineMatrix a = affine_from_function(3, {0, 1, 2}, f);
  const Eigen::Vector3d z(0.3, -1.2, 2.5);
  EXPECT_LT((a.evaluate(z) - f(z)).norm(), 1e-14);
}

TEST(Feasibility, ValidationErrors) {
  LmiProblem prob;
  prob.variable_count = 2;
  prob.add(symmetric_2x2());
  EXPECT_THROW(prob.validate(), ValidationError);
  prob.variable_count = 3;
  EXPECT_NO_THROW(prob.validate());
  AffineMatrix bad = symmetric_2x2();
  bad.coeffs[1](0, 1) = 2.0;
  LmiProblem asym;
  asym.variable_count = 3;
  asym.add(bad);
  EXPECT_THROW(asym.validate(), ValidationError);
}

}  // namespace
}  // namespace mafd
