#include "mafd/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "json_util.hpp"
#include "mafd/errors.hpp"
#include "mafd/lmi.hpp"

namespace mafd {

namespace {

double supply_rate(const QsrBlock& b, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  return y.dot(b.q * y) + 2.0 * y.dot(b.s * w) + w.dot(b.r * w);
}

void require_nonempty(const Trajectory& traj, const char* what) {
  if (traj.samples() == 0) throw ValidationError(std::string(what) + ": empty trajectory");
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_field(const std::string& s, int line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("trajectory csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

DissipationReport dissipation_check(const Trajectory& traj, const Eigen::MatrixXd& p,
                                    const QsrSpec& qsr) {
  require_nonempty(traj, "dissipation check");
  const int ns = 3 * traj.bus_count;
  if (p.rows() != ns || p.cols() != ns) {
    throw DimensionError("dissipation check: storage matrix must be " + std::to_string(ns) +
                         "x" + std::to_string(ns));
  }
  if (!(min_eigenvalue(0.5 * (p + p.transpose())) > 0.0)) {
    throw ValidationError("dissipation check: storage matrix is not positive definite");
  }
  const int n = traj.samples();
  const double h = traj.step();

  DissipationReport rep;
  rep.supply_integral.assign(n, 0.0);
  rep.storage.resize(n);
  rep.slack.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd x = traj.x.row(k).transpose();
    rep.storage[k] = x.dot(p * x);
  }
  const double t_end = traj.t.back() - traj.t.front();
  rep.tolerance = 10.0 * h * h * t_end;

  for (int k = 0; k + 1 < n; ++k) {
    const std::uint32_t m = traj.mode[k];
    if (m >= qsr.modes.size()) {
      throw ValidationError("dissipation check: no supply rate for mode " + std::to_string(m));
    }
    const QsrBlock& b = qsr.modes[m];
    const double s0 = supply_rate(b, traj.y.row(k).transpose(), traj.w.row(k).transpose());
    const double s1 = supply_rate(b, traj.y.row(k + 1).transpose(), traj.w.row(k + 1).transpose());
    const double dt = traj.t[k + 1] - traj.t[k];
    const double ds = 0.5 * dt * (s0 + s1);
    const double dv = rep.storage[k + 1] - rep.storage[k];
    rep.supply_integral[k + 1] = rep.supply_integral[k] + ds;
    rep.slack[k + 1] = rep.supply_integral[k + 1] - (rep.storage[k + 1] - rep.storage[0]);
    rep.max_storage_increase = std::max(rep.max_storage_increase, dv);
    auto& pm = rep.per_mode[m];
    ++pm.intervals;
    pm.supply += ds;
    pm.storage_change += dv;
  }
  double running_min = rep.storage[0];
  for (int k = 1; k < n; ++k) {
    rep.max_storage_rise = std::max(rep.max_storage_rise, rep.storage[k] - running_min);
    running_min = std::min(running_min, rep.storage[k]);
  }
  rep.min_slack = *std::min_element(rep.slack.begin(), rep.slack.end());
  rep.passed = rep.min_slack >= -rep.tolerance;
  return rep;
}

double l2_ratio(const Trajectory& traj) {
  require_nonempty(traj, "l2 ratio");
  double ey = 0.0;
  double ew = 0.0;
  for (int k = 0; k + 1 < traj.samples(); ++k) {
    const double dt = traj.t[k + 1] - traj.t[k];
    ey += 0.5 * dt * (traj.y.row(k).squaredNorm() + traj.y.row(k + 1).squaredNorm());
    ew += 0.5 * dt * (traj.w.row(k).squaredNorm() + traj.w.row(k + 1).squaredNorm());
  }
  if (!(ew > 0.0)) throw ValidationError("l2 ratio: input energy is zero");
  return std::sqrt(ey / ew);
}

TransientMetrics transient_metrics(const Trajectory& traj, double band) {
  require_nonempty(traj, "transient metrics");
  if (!(band > 0.0 && band < 1.0)) throw ValidationError("transient metrics: band must be in (0, 1)");
  const int nb = traj.bus_count;
  const int n = traj.samples();
  TransientMetrics m;
  m.peak_delta.assign(nb, 0.0);
  m.peak_v.assign(nb, 0.0);
  m.settling.assign(nb, traj.t.front());
  for (int i = 0; i < nb; ++i) {
    for (int k = 0; k < n; ++k) {
      m.peak_delta[i] = std::max(m.peak_delta[i], std::abs(traj.x(k, 3 * i)));
      m.peak_v[i] = std::max(m.peak_v[i], std::abs(traj.x(k, 3 * i + 2)));
    }
    const double limit = band * m.peak_delta[i];
    for (int k = n - 1; k >= 0; --k) {
      if (std::abs(traj.x(k, 3 * i)) > limit) {
        m.settling[i] = k + 1 < n ? traj.t[k + 1] : traj.t[k];
        break;
      }
    }
  }
  m.peak_delta_max = *std::max_element(m.peak_delta.begin(), m.peak_delta.end());
  m.settling_max = *std::max_element(m.settling.begin(), m.settling.end());
  try {
    m.energy_ratio = l2_ratio(traj);
    m.has_energy_ratio = true;
  } catch (const ValidationError&) {
    m.energy_ratio = 0.0;
  }
  return m;
}

std::string trajectory_to_csv(const Trajectory& traj) {
  const int nb = traj.bus_count;
  std::string out = "t,mode";
  for (int i = 0; i < 3 * nb; ++i) out += ",x" + std::to_string(i);
  for (int i = 0; i < 2 * nb; ++i) out += ",y" + std::to_string(i);
  for (int i = 0; i < 2 * nb; ++i) out += ",u_sec" + std::to_string(i);
  for (int i = 0; i < 2 * nb; ++i) out += ",w" + std::to_string(i);
  out += '\n';
  auto row = [&out](const Eigen::MatrixXd& m, int k) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out += ',';
      out += fmt(m(k, c));
    }
  };
  for (int k = 0; k < traj.samples(); ++k) {
    out += fmt(traj.t[k]);
    out += ',' + std::to_string(traj.mode[k]);
    row(traj.x, k);
    row(traj.y, k);
    row(traj.u_sec, k);
    row(traj.w, k);
    out += '\n';
  }
  return out;
}

Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("trajectory csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "t" || header[1] != "mode" ||
      (header.size() - 2) % 9 != 0) {
    throw ParseError("trajectory csv: unexpected header");
  }
  const int nb = static_cast<int>((header.size() - 2) / 9);
  for (int i = 0; i < 3 * nb; ++i) {
    if (header[2 + i] != "x" + std::to_string(i)) throw ParseError("trajectory csv: unexpected header");
  }
  std::vector<std::vector<double>> rows;
  Trajectory traj;
  traj.bus_count = nb;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ParseError("trajectory csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields");
    }
    std::vector<double> r(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) r[c] = parse_field(cells[c], line_no);
    if (r[1] < 0 || r[1] != std::floor(r[1])) {
      throw ParseError("trajectory csv line " + std::to_string(line_no) + ": bad mode");
    }
    rows.push_back(std::move(r));
  }
  const int n = static_cast<int>(rows.size());
  traj.t.resize(n);
  traj.mode.resize(n);
  traj.x.resize(n, 3 * nb);
  traj.y.resize(n, 2 * nb);
  traj.u_sec.resize(n, 2 * nb);
  traj.w.resize(n, 2 * nb);
  for (int k = 0; k < n; ++k) {
    const auto& r = rows[k];
    traj.t[k] = r[0];
    traj.mode[k] = static_cast<std::uint32_t>(r[1]);
    int c = 2;
    for (int i = 0; i < 3 * nb; ++i) traj.x(k, i) = r[c++];
    for (int i = 0; i < 2 * nb; ++i) traj.y(k, i) = r[c++];
    for (int i = 0; i < 2 * nb; ++i) traj.u_sec(k, i) = r[c++];
    for (int i = 0; i < 2 * nb; ++i) traj.w(k, i) = r[c++];
  }
  traj.u_pre = traj.u_sec;
  return traj;
}

void export_csv(const Trajectory& traj, const std::filesystem::path& path) {
  detail::write_text_file(path, trajectory_to_csv(traj));
}

Trajectory load_trajectory_csv(const std::filesystem::path& path) {
  return trajectory_from_csv(detail::read_text_file(path));
}

std::string render_svg(const std::string& title, const std::vector<PlotPanel>& panels) {
  const double width = 900.0;
  const double panel_h = 220.0;
  const double top = 40.0;
  const double left = 80.0;
  const double right = 170.0;
  const double gap = 50.0;
  const double height = top + panels.size() * (panel_h + gap) + 20.0;
  const double plot_w = width - left - right;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_num(width) << "\" height=\""
      << svg_num(height) << "\" viewBox=\"0 0 " << svg_num(width) << ' ' << svg_num(height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << svg_num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << escape_xml(title) << "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double y0 = top + p * (panel_h + gap);
    double tmin = std::numeric_limits<double>::infinity();
    double tmax = -tmin;
    double vmin = tmin;
    double vmax = -tmin;
    for (const auto& s : panel.series) {
      for (std::size_t k = 0; k < std::min(s.t.size(), s.v.size()); ++k) {
        if (!std::isfinite(s.t[k]) || !std::isfinite(s.v[k])) continue;
        tmin = std::min(tmin, s.t[k]);
        tmax = std::max(tmax, s.t[k]);
        vmin = std::min(vmin, s.v[k]);
        vmax = std::max(vmax, s.v[k]);
      }
    }
    if (!std::isfinite(tmin)) { tmin = 0.0; tmax = 1.0; vmin = -1.0; vmax = 1.0; }
    if (tmax <= tmin) tmax = tmin + 1.0;
    if (vmax - vmin < 1e-12) { vmin -= 1.0; vmax += 1.0; }
    const double pad = 0.05 * (vmax - vmin);
    vmin -= pad;
    vmax += pad;
    auto sx = [&](double t) { return left + (t - tmin) / (tmax - tmin) * plot_w; };
    auto sy = [&](double v) { return y0 + panel_h - (v - vmin) / (vmax - vmin) * panel_h; };

    svg << "<g>\n<text x=\"" << svg_num(left) << "\" y=\"" << svg_num(y0 - 8) << "\">"
        << escape_xml(panel.title) << "</text>\n"
        << "<rect x=\"" << svg_num(left) << "\" y=\"" << svg_num(y0) << "\" width=\""
        << svg_num(plot_w) << "\" height=\"" << svg_num(panel_h)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double v = vmin + (vmax - vmin) * i / 4.0;
      const double t = tmin + (tmax - tmin) * i / 4.0;
      svg << "<line x1=\"" << svg_num(left) << "\" y1=\"" << svg_num(sy(v)) << "\" x2=\""
          << svg_num(left + plot_w) << "\" y2=\"" << svg_num(sy(v))
          << "\" stroke=\"#ddd\"/>\n"
          << "<text x=\"" << svg_num(left - 6) << "\" y=\"" << svg_num(sy(v) + 4)
          << "\" text-anchor=\"end\">" << tick_label(v) << "</text>\n"
          << "<text x=\"" << svg_num(sx(t)) << "\" y=\"" << svg_num(y0 + panel_h + 16)
          << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
    }
    svg << "<text x=\"" << svg_num(left + plot_w / 2) << "\" y=\"" << svg_num(y0 + panel_h + 32)
        << "\" text-anchor=\"middle\">t (s)</text>\n"
        << "<text transform=\"translate(" << svg_num(18) << ',' << svg_num(y0 + panel_h / 2)
        << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(panel.y_label) << "</text>\n";

    for (std::size_t s = 0; s < panel.series.size(); ++s) {
      const auto& series = panel.series[s];
      const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
      const std::size_t count = std::min(series.t.size(), series.v.size());
      const std::size_t stride = std::max<std::size_t>(1, count / 2000);
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t k = 0; k < count; k += stride) {
        if (!std::isfinite(series.v[k])) continue;
        svg << svg_num(sx(series.t[k])) << ',' << svg_num(sy(series.v[k])) << ' ';
      }
      if (count > 0 && (count - 1) % stride != 0 && std::isfinite(series.v[count - 1])) {
        svg << svg_num(sx(series.t[count - 1])) << ',' << svg_num(sy(series.v[count - 1]));
      }
      svg << "\"/>\n";
      const double ly = y0 + 14 + 16 * s;
      svg << "<line x1=\"" << svg_num(left + plot_w + 10) << "\" y1=\"" << svg_num(ly - 4)
          << "\" x2=\"" << svg_num(left + plot_w + 30) << "\" y2=\"" << svg_num(ly - 4)
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << svg_num(left + plot_w + 34) << "\" y=\"" << svg_num(ly) << "\">"
          << escape_xml(series.label) << "</text>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string trajectory_svg(const Trajectory& traj, const std::string& title) {
  const int nb = traj.bus_count;
  auto column = [&](const Eigen::MatrixXd& m, int c) {
    std::vector<double> v(traj.samples());
    for (int k = 0; k < traj.samples(); ++k) v[k] = m(k, c);
    return v;
  };
  std::vector<PlotPanel> panels = {{"Angle deviation", "rad", {}},
                                   {"Frequency deviation", "rad/s", {}},
                                   {"Voltage deviation", "p.u.", {}},
                                   {"Secondary active input", "p.u.", {}}};
  for (int i = 0; i < nb; ++i) {
    const std::string bus = "bus " + std::to_string(i + 1);
    panels[0].series.push_back({bus, traj.t, column(traj.x, 3 * i)});
    panels[1].series.push_back({bus, traj.t, column(traj.x, 3 * i + 1)});
    panels[2].series.push_back({bus, traj.t, column(traj.x, 3 * i + 2)});
    if (traj.u_sec.rows() == traj.samples() && traj.u_sec.cols() == 2 * nb) {
      panels[3].series.push_back({bus, traj.t, column(traj.u_sec, 2 * i)});
    }
  }
  return render_svg(title, panels);
}

void export_svg(const std::string& svg, const std::filesystem::path& path) {
  detail::write_text_file(path, svg);
}

std::string dissipation_to_json(const DissipationReport& report, int indent) {
  detail::Json j;
  j["passed"] = report.passed;
  j["min_slack"] = report.min_slack;
  j["tolerance"] = report.tolerance;
  j["max_storage_increase"] = report.max_storage_increase;
  j["max_storage_rise"] = report.max_storage_rise;
  j["final_supply_integral"] = report.supply_integral.empty() ? 0.0 : report.supply_integral.back();
  j["final_storage"] = report.storage.empty() ? 0.0 : report.storage.back();
  detail::Json modes = detail::Json::object();
  for (const auto& [mode, d] : report.per_mode) {
    modes[std::to_string(mode)] = {{"intervals", d.intervals},
                                   {"supply", d.supply},
                                   {"storage_change", d.storage_change}};
  }
  j["per_mode"] = std::move(modes);
  return j.dump(indent);
}

std::string metrics_to_json(const TransientMetrics& metrics, int indent) {
  detail::Json j;
  j["peak_delta"] = metrics.peak_delta;
  j["peak_v"] = metrics.peak_v;
  j["settling"] = metrics.settling;
  j["peak_delta_max"] = metrics.peak_delta_max;
  j["settling_max"] = metrics.settling_max;
  if (metrics.has_energy_ratio) {
    j["energy_ratio"] = metrics.energy_ratio;
  } else {
    j["energy_ratio"] = nullptr;
  }
  return j.dump(indent);
}

}  // namespace mafd
