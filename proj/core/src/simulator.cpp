#include "mafd/simulator.hpp"

#include <cmath>
#include <limits>

#include "json_util.hpp"
#include "mafd/errors.hpp"
#include "mafd/synthesis.hpp"

namespace mafd {
namespace {

using detail::Json;

constexpr double kInf = std::numeric_limits<double>::infinity();

long grid_index(double t, double step, std::string_view what) {
  const double r = t / step;
  const long k = std::lround(r);
  if (std::abs(r - static_cast<double>(k)) > 1e-9 * std::max(1.0, std::abs(r))) {
    throw ValidationError(std::string(what) + " at t=" + std::to_string(t) +
                          " is not aligned to the step grid");
  }
  return k;
}

Eigen::VectorXd limits_from_json(const Json& j, int n, std::string_view what) {
  if (j.is_number()) return Eigen::VectorXd::Constant(n, j.get<double>());
  const auto v = detail::to_doubles(j, what);
  if (static_cast<int>(v.size()) != n) {
    throw ValidationError(std::string(what) + ": expected " + std::to_string(n) + " entries");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isinf(v(i))) {
      a.push_back(nullptr);
    } else {
      a.push_back(v(i));
    }
  }
  return a;
}

void check_gains(const GainSchedule& gains, const Scenario& sc, int n, bool comparator) {
  gains.check(kChannelsPerBus * n);
  if (gains.empty()) return;
  if (comparator || sc.switching.empty() || sc.switching.front().t > 0.0) {
    if (!gains.find(0)) throw ValidationError("no gain for reachable mode 0");
  }
  if (comparator) return;
  for (const auto& e : sc.switching) {
    if (!gains.find(e.mode.index())) {
      throw ValidationError("no gain for reachable mode " + std::to_string(e.mode.index()));
    }
  }
}

Trajectory simulate(const SwitchedSystem& sys, const GainSchedule& gains, const Scenario& sc,
                    bool comparator) {
  const int n = sys.bus_count();
  sc.validate(n);
  check_gains(gains, sc, n, comparator);
  const int ns = sys.state_dim();
  const int nc = sys.channel_dim();
  const long steps = sc.step_count();
  const double h = sc.step;

  Trajectory tr;
  tr.bus_count = n;
  tr.t.reserve(steps + 1);
  tr.mode.reserve(steps + 1);
  tr.x.resize(steps + 1, ns);
  tr.y.resize(steps + 1, nc);
  tr.u_pre.resize(steps + 1, nc);
  tr.u_sec.resize(steps + 1, nc);
  tr.w.resize(steps + 1, nc);

  const SwitchMode angle = SwitchMode::all_angle(n);
  Eigen::VectorXd held = Eigen::VectorXd::Zero(n);
  std::vector<bool> lost(n, false);

  SwitchMode signal = angle;   // scenario switching signal
  SwitchMode dynamics = angle; // mode used for f and g
  Eigen::VectorXd w = Eigen::VectorXd::Zero(nc);
  const Eigen::MatrixXd* k_gain = nullptr;

  struct Eval {
    Eigen::VectorXd xdot, y, u_pre, u_sec;
  };
  const auto evaluate = [&](const Eigen::VectorXd& x) {
    Eval e;
    const Eigen::VectorXd u = sys.power_coupling(x);
    const Eigen::VectorXd open = sys.mode_rhs_with_injection(x, u, w, dynamics);
    e.y = sys.output_from_rhs(x, open, dynamics);
    if (k_gain == nullptr) {
      e.u_pre = Eigen::VectorXd::Zero(nc);
      e.u_sec = e.u_pre;
      e.xdot = open;
      return e;
    }
    Eigen::VectorXd measured = e.y;
    for (int i = 0; i < n; ++i) {
      if (lost[i]) measured(p_channel(i)) = held(i);
    }
    e.u_pre = *k_gain * measured;
    e.u_sec = e.u_pre;
    for (int i = 0; i < n; ++i) {
      e.u_sec(p_channel(i)) = std::clamp(e.u_pre(p_channel(i)), -sc.sat_p(i), sc.sat_p(i));
      e.u_sec(q_channel(i)) = std::clamp(e.u_pre(q_channel(i)), -sc.sat_q(i), sc.sat_q(i));
    }
    e.xdot = sys.mode_rhs_with_injection(x, u + e.u_sec, w, dynamics);
    return e;
  };
  const OdeRhs rhs = [&](double, const Eigen::VectorXd& x) { return evaluate(x).xdot; };

  Eigen::VectorXd x = sc.x0.size() == ns ? sc.x0 : Eigen::VectorXd::Zero(ns);
  std::size_t next_switch = 0;
  std::size_t next_dist = 0;
  long stored = 0;
  for (long k = 0; k <= steps; ++k) {
    while (next_switch < sc.switching.size() &&
           grid_index(sc.switching[next_switch].t, h, "switching event") <= k) {
      signal = sc.switching[next_switch++].mode;
    }
    while (next_dist < sc.disturbance.size() &&
           grid_index(sc.disturbance[next_dist].t, h, "disturbance event") <= k) {
      w = sc.disturbance[next_dist++].w;
    }
    dynamics = comparator ? angle : signal;
    k_gain = gains.empty() ? nullptr : gains.find(dynamics.index());
    if (comparator) {
      for (int i = 0; i < n; ++i) lost[i] = signal.frequency_droop(i);
    }

    const double t = static_cast<double>(k) * h;
    const Eval e = evaluate(x);
    if (comparator) {
      for (int i = 0; i < n; ++i) {
        if (!lost[i]) held(i) = e.y(p_channel(i));
      }
    }
    tr.t.push_back(t);
    tr.mode.push_back(signal.index());
    tr.x.row(k) = x.transpose();
    tr.y.row(k) = e.y.transpose();
    tr.u_pre.row(k) = e.u_pre.transpose();
    tr.u_sec.row(k) = e.u_sec.transpose();
    tr.w.row(k) = w.transpose();
    stored = k + 1;
    if (k == steps) break;

    x = rk4_step(rhs, t, x, h);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceThreshold) {
      tr.diverged = true;
      break;
    }
  }
  for (Eigen::MatrixXd* m : {&tr.x, &tr.y, &tr.u_pre, &tr.u_sec, &tr.w}) {
    m->conservativeResize(stored, Eigen::NoChange);
  }
  return tr;
}

}  // namespace

Eigen::VectorXd rk4_step(const OdeRhs& f, double t, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd k1 = f(t, x);
  const Eigen::VectorXd k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd integrate_rk4(const OdeRhs& f, double t0, const Eigen::VectorXd& x0, double h,
                              long steps) {
  Eigen::VectorXd x = x0;
  for (long k = 0; k < steps; ++k) x = rk4_step(f, t0 + static_cast<double>(k) * h, x, h);
  return x;
}

long Scenario::step_count() const { return std::lround(t_end / step); }

void Scenario::validate(int bus_count) const {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("scenario: step must be > 0");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ValidationError("scenario: t_end must be > 0");
  grid_index(t_end, step, "t_end");
  const int ns = kStatesPerBus * bus_count;
  const int nc = kChannelsPerBus * bus_count;
  if (x0.size() != 0 && x0.size() != ns) throw DimensionError("scenario: x0 has wrong length");
  if (x0.size() != 0 && !x0.allFinite()) throw ValidationError("scenario: x0 must be finite");
  if (sat_p.size() != bus_count || sat_q.size() != bus_count) {
    throw DimensionError("scenario: saturation needs one entry per bus");
  }
  if ((sat_p.array() < 0.0).any() || (sat_q.array() < 0.0).any() || sat_p.hasNaN() || sat_q.hasNaN()) {
    throw ValidationError("scenario: saturation limits must be >= 0");
  }
  double last = -kInf;
  for (const auto& e : switching) {
    if (e.mode.bus_count() != bus_count) throw DimensionError("scenario: sigma has wrong length");
    if (!(e.t > last)) throw ValidationError("scenario: switching times must strictly increase");
    if (e.t < 0.0 || e.t > t_end) throw ValidationError("scenario: switching time outside [0, t_end]");
    grid_index(e.t, step, "switching event");
    last = e.t;
  }
  last = -kInf;
  for (const auto& e : disturbance) {
    if (e.w.size() != nc) throw DimensionError("scenario: disturbance has wrong length");
    if (!e.w.allFinite()) throw ValidationError("scenario: disturbance must be finite");
    if (!(e.t > last)) throw ValidationError("scenario: disturbance times must strictly increase");
    if (e.t < 0.0 || e.t > t_end) throw ValidationError("scenario: disturbance time outside [0, t_end]");
    grid_index(e.t, step, "disturbance event");
    last = e.t;
  }
}

SwitchMode Scenario::mode_at(long k, int bus_count) const {
  SwitchMode m = SwitchMode::all_angle(bus_count);
  for (const auto& e : switching) {
    if (std::lround(e.t / step) > k) break;
    m = e.mode;
  }
  return m;
}

Eigen::VectorXd Scenario::disturbance_at(long k, int bus_count) const {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(kChannelsPerBus * bus_count);
  for (const auto& e : disturbance) {
    if (std::lround(e.t / step) > k) break;
    w = e.w;
  }
  return w;
}

Scenario parse_scenario(const std::string& text, int bus_count) {
  const Json doc = detail::parse_json(text, "scenario");
  detail::require_keys(doc, {"name", "description", "t_end", "step", "x0", "switching", "disturbance",
                             "saturation", "comparator", "controller"},
                       "scenario");
  Scenario sc;
  sc.t_end = detail::get_number(doc, "t_end", "scenario");
  sc.step = detail::get_number_or(doc, "step", 1e-3, "scenario");
  if (doc.contains("x0")) {
    const auto v = detail::to_doubles(doc["x0"], "scenario x0");
    sc.x0 = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (doc.contains("switching")) {
    for (const auto& e : detail::get_array(doc, "switching", "scenario")) {
      detail::require_keys(e, {"t", "sigma"}, "switching event");
      if (!e.contains("sigma") || !e["sigma"].is_array()) throw ParseError("switching event: 'sigma' array required");
      std::vector<int> sigma;
      for (const auto& s : e["sigma"]) {
        if (!s.is_number_integer()) throw ParseError("switching event: sigma entries must be integers");
        sigma.push_back(s.get<int>());
      }
      SwitchingEvent ev;
      ev.t = detail::get_number(e, "t", "switching event");
      ev.mode = SwitchMode::from_sigma(sigma);
      sc.switching.push_back(std::move(ev));
    }
  }
  if (doc.contains("disturbance")) {
    for (const auto& e : detail::get_array(doc, "disturbance", "scenario")) {
      detail::require_keys(e, {"t", "dp", "dq"}, "disturbance event");
      DisturbanceEvent ev;
      ev.t = detail::get_number(e, "t", "disturbance event");
      const Eigen::VectorXd dp = limits_from_json(e.at("dp"), bus_count, "disturbance dp");
      const Eigen::VectorXd dq = limits_from_json(e.at("dq"), bus_count, "disturbance dq");
      ev.w.resize(kChannelsPerBus * bus_count);
      for (int i = 0; i < bus_count; ++i) {
        ev.w(p_channel(i)) = dp(i);
        ev.w(q_channel(i)) = dq(i);
      }
      sc.disturbance.push_back(std::move(ev));
    }
  }
  sc.sat_p = Eigen::VectorXd::Constant(bus_count, kInf);
  sc.sat_q = Eigen::VectorXd::Constant(bus_count, kInf);
  if (doc.contains("saturation")) {
    const Json& s = doc["saturation"];
    detail::require_keys(s, {"p", "q"}, "saturation");
    if (s.contains("p")) sc.sat_p = limits_from_json(s["p"], bus_count, "saturation p");
    if (s.contains("q")) sc.sat_q = limits_from_json(s["q"], bus_count, "saturation q");
  }
  if (doc.contains("comparator")) {
    const Json& c = doc["comparator"];
    if (c == "mafd") {
      sc.comparator = Controller::kMafd;
    } else if (c == "angle-droop-hold") {
      sc.comparator = Controller::kAngleDroopHold;
    } else {
      throw ParseError("scenario: comparator must be 'mafd' or 'angle-droop-hold'");
    }
  }
  if (doc.contains("controller")) {
    if (!doc["controller"].is_string()) throw ParseError("scenario: controller must be a string");
    sc.controller = doc["controller"].get<std::string>();
  }
  sc.validate(bus_count);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path, int bus_count) {
  return parse_scenario(detail::read_text_file(path), bus_count);
}

std::string scenario_to_json(const Scenario& sc, int indent) {
  Json doc;
  doc["t_end"] = sc.t_end;
  doc["step"] = sc.step;
  if (sc.x0.size() > 0) doc["x0"] = vector_json(sc.x0);
  Json sw = Json::array();
  for (const auto& e : sc.switching) sw.push_back({{"t", e.t}, {"sigma", e.mode.sigma()}});
  doc["switching"] = sw;
  Json dist = Json::array();
  for (const auto& e : sc.disturbance) {
    Json dp = Json::array();
    Json dq = Json::array();
    for (Eigen::Index i = 0; i < e.w.size() / kChannelsPerBus; ++i) {
      dp.push_back(e.w(p_channel(static_cast<int>(i))));
      dq.push_back(e.w(q_channel(static_cast<int>(i))));
    }
    dist.push_back({{"t", e.t}, {"dp", dp}, {"dq", dq}});
  }
  doc["disturbance"] = dist;
  Json sat;
  if (sc.sat_p.allFinite()) sat["p"] = vector_json(sc.sat_p);
  if (sc.sat_q.allFinite()) sat["q"] = vector_json(sc.sat_q);
  if (!sat.is_null()) doc["saturation"] = sat;
  doc["comparator"] = sc.comparator == Controller::kMafd ? "mafd" : "angle-droop-hold";
  if (!sc.controller.empty()) doc["controller"] = sc.controller;
  return doc.dump(indent);
}

GainSchedule::GainSchedule(const SynthesisResult& result) {
  for (const auto& g : result.modes) set(g.index, g.k);
}

void GainSchedule::set(std::uint32_t mode, Eigen::MatrixXd k) { gains_[mode] = std::move(k); }

const Eigen::MatrixXd* GainSchedule::find(std::uint32_t mode) const {
  auto it = gains_.find(mode);
  return it == gains_.end() ? nullptr : &it->second;
}

void GainSchedule::check(int channels) const {
  for (const auto& [mode, k] : gains_) {
    if (k.rows() != channels || k.cols() != channels) {
      throw DimensionError("gain for mode " + std::to_string(mode) + " is " + std::to_string(k.rows()) +
                           "x" + std::to_string(k.cols()) + ", expected " + std::to_string(channels) +
                           "x" + std::to_string(channels));
    }
    if (!k.allFinite()) throw ValidationError("gain for mode " + std::to_string(mode) + " is not finite");
  }
}

Trajectory run_scenario(const SwitchedSystem& system, const GainSchedule& gains,
                        const Scenario& scenario) {
  return simulate(system, gains, scenario, false);
}

Trajectory run_comparator(const SwitchedSystem& system, const GainSchedule& gains,
                          const Scenario& scenario) {
  return simulate(system, gains, scenario, true);
}

Trajectory run(const SwitchedSystem& system, const GainSchedule& gains, const Scenario& scenario) {
  return scenario.comparator == Controller::kMafd ? run_scenario(system, gains, scenario)
                                                  : run_comparator(system, gains, scenario);
}

}  // namespace mafd
