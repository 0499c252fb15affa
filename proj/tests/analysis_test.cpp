#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mafd/analysis.hpp"
#include "mafd/errors.hpp"
#include "test_support.hpp"

namespace mafd {
namespace {

Trajectory zeros(int buses, int samples, double step) {
  Trajectory t;
  t.bus_count = buses;
  for (int k = 0; k < samples; ++k) {
    t.t.push_back(k * step);
    t.mode.push_back(0);
  }
  t.x = Eigen::MatrixXd::Zero(samples, 3 * buses);
  t.y = Eigen::MatrixXd::Zero(samples, 2 * buses);
  t.u_pre = t.y;
  t.u_sec = t.y;
  t.w = t.y;
  return t;
}

// Minimal well-formedness check: balanced tags, quoted attributes, no stray '<' or '&'.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_closed = false;
  while (i < s.size()) {
    if (s[i] == '&') {
      const std::size_t semi = s.find(';', i);
      if (semi == std::string::npos) return false;
      const std::string ent = s.substr(i, semi - i + 1);
      if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") return false;
      i = semi + 1;
      continue;
    }
    if (s[i] != '<') {
      ++i;
      continue;
    }
    if (s.compare(i, 4, "<!--") == 0) {
      const std::size_t end = s.find("-->", i);
      if (end == std::string::npos) return false;
      i = end + 3;
      continue;
    }
    if (s.compare(i, 2, "<?") == 0) {
      const std::size_t end = s.find("?>", i);
      if (end == std::string::npos) return false;
      i = end + 2;
      continue;
    }
    std::size_t j = i + 1;
    char quote = 0;
    while (j < s.size() && (quote || s[j] != '>')) {
      if (quote) {
        if (s[j] == quote) quote = 0;
        else if (s[j] == '<') return false;
      } else if (s[j] == '"' || s[j] == '\'') {
        quote = s[j];
      } else if (s[j] == '<') {
        return false;
      }
      ++j;
    }
    if (j >= s.size()) return false;
    std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (!tag.empty() && tag[0] == '/') {
      const std::string name = tag.substr(1, tag.find_first_of(" \t\n") - 1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      if (stack.empty()) root_closed = true;
      continue;
    }
    if (root_closed) return false;
    const bool self_closing = !tag.empty() && tag.back() == '/';
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (name.empty()) return false;
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty() && root_closed;
}

TEST(Dissipation, ZeroTrajectoryIsTight) {
  const Trajectory t = zeros(3, 101, 0.01);
  const DissipationReport r = dissipation_check(t, Eigen::MatrixXd::Identity(9, 9), QsrSpec::defaults(8, 6));
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.min_slack, 0.0);
  EXPECT_EQ(r.max_storage_rise, 0.0);
  for (double v : r.slack) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(r.tolerance, 10.0 * 0.01 * 0.01 * 1.0, 1e-15);
  EXPECT_EQ(r.per_mode.at(0).intervals, 100);
}

TEST(Dissipation, QuadratureConvergesQuadratically) {
  // One bus, y_P = sin t, w = 0, Q = -I: supply integral -(t/2 - sin 2t / 4).
  auto error = [](int samples) {
    const double step = 2.0 / (samples - 1);
    Trajectory t = zeros(1, samples, step);
    for (int k = 0; k < samples; ++k) t.y(k, 0) = std::sin(t.t[k]);
    const DissipationReport r =
        dissipation_check(t, Eigen::MatrixXd::Identity(3, 3), QsrSpec::uniform(2, 2, -1.0, 0.0, 1.0));
    const double exact = -(1.0 - std::sin(4.0) / 4.0);
    return std::abs(r.supply_integral.back() - exact);
  };
  const double e1 = error(21);
  const double e2 = error(41);
  const double e3 = error(81);
  EXPECT_NEAR(e1 / e2, 4.0, 0.2);
  EXPECT_NEAR(e2 / e3, 4.0, 0.2);
}

TEST(Dissipation, StorageRiseTracksIncrease) {
  Trajectory t = zeros(1, 5, 0.1);
  const double v[] = {0.3, 0.1, 0.2, 0.05, 0.25};
  for (int k = 0; k < 5; ++k) t.x(k, 0) = v[k];
  const DissipationReport r =
      dissipation_check(t, Eigen::MatrixXd::Identity(3, 3), QsrSpec::uniform(2, 2, -1.0, 0.0, 1.0));
  EXPECT_NEAR(r.max_storage_rise, 0.25 * 0.25 - 0.05 * 0.05, 1e-15);
  EXPECT_NEAR(r.max_storage_increase, 0.25 * 0.25 - 0.05 * 0.05, 1e-15);
}

TEST(Dissipation, Rejections) {
  const Trajectory t = zeros(3, 11, 0.1);
  const QsrSpec qsr = QsrSpec::defaults(8, 6);
  EXPECT_THROW(dissipation_check(t, Eigen::MatrixXd::Identity(6, 6), qsr), DimensionError);
  EXPECT_THROW(dissipation_check(t, -Eigen::MatrixXd::Identity(9, 9), qsr), ValidationError);
  EXPECT_THROW(dissipation_check(t, Eigen::MatrixXd::Identity(9, 9), QsrSpec{}), ValidationError);
}

TEST(L2Ratio, ClosedForms) {
  Trajectory t = zeros(1, 101, 0.01);
  for (int k = 0; k < 101; ++k) t.w(k, 0) = std::cos(t.t[k]);
  EXPECT_EQ(l2_ratio(t), 0.0);
  t.y = t.w;
  EXPECT_NEAR(l2_ratio(t), 1.0, 1e-15);
  t.y = 3.0 * t.w;
  EXPECT_NEAR(l2_ratio(t), 3.0, 1e-14);
  EXPECT_THROW(l2_ratio(zeros(1, 10, 0.1)), ValidationError);
}

TEST(TransientMetrics, ZeroTrajectory) {
  const TransientMetrics m = transient_metrics(zeros(2, 50, 0.1));
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(m.peak_delta[i], 0.0);
    EXPECT_EQ(m.settling[i], 0.0);
  }
  EXPECT_FALSE(m.has_energy_ratio);
}

TEST(TransientMetrics, ExponentialSettling) {
  const double step = 1e-3;
  Trajectory t = zeros(1, 10001, step);
  for (int k = 0; k < t.samples(); ++k) t.x(k, 0) = std::exp(-t.t[k]);
  const TransientMetrics m = transient_metrics(t, 0.05);
  EXPECT_NEAR(m.peak_delta[0], 1.0, 1e-15);
  EXPECT_NEAR(m.settling[0], -std::log(0.05), step);
  EXPECT_THROW(transient_metrics(t, 1.5), ValidationError);
  EXPECT_THROW(transient_metrics(Trajectory{}), ValidationError);
}

TEST(Csv, EmptyTrajectoryIsHeaderOnly) {
  Trajectory t = zeros(1, 0, 0.1);
  const std::string csv = trajectory_to_csv(t);
  EXPECT_EQ(csv, "t,mode,x0,x1,x2,y0,y1,u_sec0,u_sec1,w0,w1\n");
  EXPECT_EQ(trajectory_from_csv(csv).samples(), 0);
}

TEST(Csv, RoundTripIsExact) {
  Trajectory t = zeros(2, 30, 1.0 / 3.0);
  for (int k = 0; k < 30; ++k) {
    t.mode[k] = k % 4;
    for (int c = 0; c < 6; ++c) t.x(k, c) = std::sin(k * 0.37 + c) / 3.0;
    for (int c = 0; c < 4; ++c) {
      t.y(k, c) = std::exp(-k * 0.1 * c) * 1e-7;
      t.u_sec(k, c) = -c / 7.0;
      t.w(k, c) = k * 1e-300;
    }
  }
  const Trajectory back = trajectory_from_csv(trajectory_to_csv(t));
  ASSERT_EQ(back.samples(), 30);
  EXPECT_EQ(back.bus_count, 2);
  EXPECT_EQ(back.t, t.t);
  EXPECT_EQ(back.mode, t.mode);
  EXPECT_EQ(back.x, t.x);
  EXPECT_EQ(back.y, t.y);
  EXPECT_EQ(back.u_sec, t.u_sec);
  EXPECT_EQ(back.w, t.w);
  EXPECT_THROW(trajectory_from_csv("t,mode,x0\n1,0\n"), ParseError);
}

TEST(Svg, WellFormed) {
  Trajectory t = zeros(3, 5001, 0.004);
  for (int k = 0; k < t.samples(); ++k) t.x(k, 0) = std::sin(t.t[k]);
  const std::string svg = trajectory_svg(t, "angle <&> \"test\"");
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_NE(svg.find("&lt;&amp;&gt;"), std::string::npos);
  EXPECT_FALSE(well_formed_xml("<svg><g></svg>"));
  EXPECT_FALSE(well_formed_xml("<svg>&bogus;</svg>"));

  const auto path = std::filesystem::temp_directory_path() / "mafd_analysis_test.svg";
  export_svg(svg, path);
  EXPECT_TRUE(std::filesystem::exists(path));
  std::filesystem::remove(path);
  EXPECT_THROW(export_svg(svg, "/nonexistent/dir/x.svg"), IoError);
}

}  // namespace
}  // namespace mafd
