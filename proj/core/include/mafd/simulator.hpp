#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mafd/switched_dynamics.hpp"

namespace mafd {

struct SynthesisResult;

/// Classical fourth-order Runge-Kutta step of x' = f(t, x).
using OdeRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
Eigen::VectorXd rk4_step(const OdeRhs& f, double t, const Eigen::VectorXd& x, double h);
/// `steps` fixed RK4 steps from (t0, x0).
Eigen::VectorXd integrate_rk4(const OdeRhs& f, double t0, const Eigen::VectorXd& x0, double h,
                              long steps);

struct SwitchingEvent {
  double t = 0.0;
  SwitchMode mode;
};

/// Disturbance held constant from `t` until the next event.
struct DisturbanceEvent {
  double t = 0.0;
  Eigen::VectorXd w;  // stacked [dP_ext, dQ_ext] per bus
};

enum class Controller { kMafd, kAngleDroopHold };

struct Scenario {
  double t_end = 0.0;
  double step = 1e-3;
  Eigen::VectorXd x0;
  std::vector<SwitchingEvent> switching;
  std::vector<DisturbanceEvent> disturbance;
  Eigen::VectorXd sat_p;  // per bus, +inf when unlimited
  Eigen::VectorXd sat_q;
  Controller comparator = Controller::kMafd;
  std::string controller;  // optional gains file reference

  long step_count() const;
  /// Throws ValidationError on unaligned or non-increasing events, wrong
  /// sizes, t_end <= 0 or negative limits.
  void validate(int bus_count) const;
  /// Mode and disturbance in force on [t, t + step) for grid index k.
  SwitchMode mode_at(long k, int bus_count) const;
  Eigen::VectorXd disturbance_at(long k, int bus_count) const;
};

/// Scenario document: t_end, step, x0, switching[{t, sigma}],
/// disturbance[{t, dp, dq}], saturation{p, q}, comparator, controller.
/// Saturation entries may be scalars (same for every bus).
Scenario parse_scenario(const std::string& text, int bus_count);
Scenario load_scenario(const std::filesystem::path& path, int bus_count);
std::string scenario_to_json(const Scenario& scenario, int indent = 2);

/// Output-feedback gains keyed by mode bitmask. Empty means no secondary input.
class GainSchedule {
 public:
  GainSchedule() = default;
  explicit GainSchedule(const SynthesisResult& result);

  void set(std::uint32_t mode, Eigen::MatrixXd k);
  const Eigen::MatrixXd* find(std::uint32_t mode) const;
  bool empty() const { return gains_.empty(); }
  /// Throws DimensionError unless every gain is channels x channels.
  void check(int channels) const;

 private:
  std::map<std::uint32_t, Eigen::MatrixXd> gains_;
};

/// Uniformly sampled closed-loop run. Row k of each matrix is sample k; the
/// mode, disturbance and inputs of row k are those in force on [t_k, t_k+1).
struct Trajectory {
  int bus_count = 0;
  std::vector<double> t;
  std::vector<std::uint32_t> mode;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  Eigen::MatrixXd u_pre;  // secondary input before saturation
  Eigen::MatrixXd u_sec;  // after saturation
  Eigen::MatrixXd w;
  bool diverged = false;

  int samples() const { return static_cast<int>(t.size()); }
  double step() const { return t.size() > 1 ? t[1] - t[0] : 0.0; }
};

inline constexpr double kDivergenceThreshold = 1e3;

/// Closed loop x' = f_sigma(x, h(x) + sat(K_sigma y), w) integrated with RK4.
/// The feedback is re-evaluated at every stage. Throws ValidationError when a
/// reachable mode lacks a gain and DimensionError on mis-sized gains. A state
/// component beyond kDivergenceThreshold (or non-finite) truncates the run and
/// sets `diverged`.
Trajectory run_scenario(const SwitchedSystem& system, const GainSchedule& gains,
                        const Scenario& scenario);

/// Angle-droop comparator: dynamics stay in the all-angle mode and use the
/// all-angle gain; while a bus's angle measurement is lost (sigma_i = 2 in the
/// scenario) its angle-rate output channel is held at its last value before
/// the loss.
Trajectory run_comparator(const SwitchedSystem& system, const GainSchedule& gains,
                          const Scenario& scenario);

/// Dispatches on scenario.comparator.
Trajectory run(const SwitchedSystem& system, const GainSchedule& gains, const Scenario& scenario);

}  // namespace mafd
