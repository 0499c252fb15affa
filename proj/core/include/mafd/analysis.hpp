#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mafd/simulator.hpp"
#include "mafd/synthesis.hpp"

namespace mafd {

struct ModeDissipation {
  int intervals = 0;
  double supply = 0.0;          // integral of the supply rate over this mode's intervals
  double storage_change = 0.0;  // sum of V(t_k+1) - V(t_k) over the same intervals
};

/// Dissipation inequality along a sampled trajectory:
///   slack(t) = int_0^t s(y, w) - (V(x(t)) - V(x(0))),  V(x) = x'Px,
///   s(y, w) = y'Qy + 2 y'Sw + w'Rw  with the QSR block of the active mode.
struct DissipationReport {
  std::vector<double> supply_integral;
  std::vector<double> storage;
  std::vector<double> slack;
  double min_slack = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  /// Largest increase of V between consecutive samples.
  double max_storage_increase = 0.0;
  /// max over s <= t of V(t) - V(s); zero iff V is nonincreasing.
  double max_storage_rise = 0.0;
  std::map<std::uint32_t, ModeDissipation> per_mode;
};

/// Trapezoidal quadrature on each interval with the QSR of the interval's
/// mode. PASS iff min_slack >= -tol with tol = 10 * step^2 * t_end.
/// Throws ValidationError if P is not positive definite or a visited mode has
/// no QSR block.
DissipationReport dissipation_check(const Trajectory& traj, const Eigen::MatrixXd& p,
                                    const QsrSpec& qsr);

/// sqrt(int |y|^2 / int |w|^2) by the trapezoid rule. Throws ValidationError
/// when the input energy is zero.
double l2_ratio(const Trajectory& traj);

struct TransientMetrics {
  std::vector<double> peak_delta;  // max |d_delta_i| (rad)
  std::vector<double> peak_v;      // max |d_v_i| (p.u.)
  std::vector<double> settling;    // first time after which |d_delta_i| <= band * peak_i
  double peak_delta_max = 0.0;
  double settling_max = 0.0;
  double energy_ratio = 0.0;       // l2_ratio, 0 when the input energy is zero
  bool has_energy_ratio = false;
};

/// Throws ValidationError for an empty trajectory or band outside (0, 1).
TransientMetrics transient_metrics(const Trajectory& traj, double band = 0.05);

/// Trajectory CSV: header `t,mode,x0..,y0..,u_sec0..,w0..`, one row per
/// sample, shortest round-trip decimal representation.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text);
void export_csv(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory_csv(const std::filesystem::path& path);

/// One curve of a line plot.
struct PlotSeries {
  std::string label;
  std::vector<double> t;
  std::vector<double> v;
};

struct PlotPanel {
  std::string title;
  std::string y_label;
  std::vector<PlotSeries> series;
};

/// Stacked line plots sharing a time axis in seconds.
std::string render_svg(const std::string& title, const std::vector<PlotPanel>& panels);
/// Panels for angle, frequency and voltage deviations and secondary inputs.
std::string trajectory_svg(const Trajectory& traj, const std::string& title);
void export_svg(const std::string& svg, const std::filesystem::path& path);

std::string dissipation_to_json(const DissipationReport& report, int indent = 2);
std::string metrics_to_json(const TransientMetrics& metrics, int indent = 2);

}  // namespace mafd
