#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mafd/analysis.hpp"
#include "mafd/errors.hpp"
#include "mafd/grid_model.hpp"
#include "mafd/linearization.hpp"
#include "mafd/power_flow.hpp"
#include "mafd/simulator.hpp"
#include "mafd/synthesis.hpp"

#ifndef MAFD_VERSION
#define MAFD_VERSION "0.0.0"
#endif
#ifndef MAFD_DEFAULT_DATA_DIR
#define MAFD_DEFAULT_DATA_DIR "data"
#endif

namespace mafd::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr double kSmallSignalAmplitude = 0.05;
constexpr double kSmallInitialState = 0.01;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Json matrix_rows(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Json sigma_json(const SwitchMode& mode) { return Json(mode.sigma()); }

struct Common {
  std::optional<long long> seed;
};

void attach_seed(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Recorded in the run manifest; the pipeline is deterministic");
}

SwitchedSystem load_system(const fs::path& network, const PowerFlowOptions& pf = {}) {
  NetworkModel net = load_network(network);
  PowerFlowOptions opts = pf;
  if (opts.slack_id == 0) opts.slack_id = net.buses().front().id;
  OperatingPoint op = solve_power_flow(net, opts);
  return SwitchedSystem(std::move(net), std::move(op));
}

QsrSpec resolve_qsr(const std::string& arg, int mode_count, int channels) {
  if (arg.empty() || arg == "default") return QsrSpec::defaults(mode_count, channels);
  return load_qsr(arg, mode_count, channels);
}

fs::path manifest_path_for(const fs::path& out) {
  return out.parent_path() / (out.filename().string() + ".manifest.json");
}

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& args,
                           const Common& common) {
  RunManifest m;
  m.command = command;
  m.arguments = args;
  m.started_utc = utc_now();
  if (common.seed) {
    m.seed = *common.seed;
    m.seed_given = true;
  }
  return m;
}

void write_manifest(RunManifest& m, const fs::path& path) {
  m.finalize();
  write_file(path, m.to_json());
}

Json metrics_json(const Trajectory& traj) {
  Json j = Json::parse(metrics_to_json(transient_metrics(traj)));
  j["diverged"] = traj.diverged;
  j["t_final"] = traj.t.empty() ? 0.0 : traj.t.back();
  double end = 0.0;
  if (traj.samples() > 0) {
    for (int i = 0; i < traj.bus_count; ++i) {
      end = std::max(end, std::abs(traj.x(traj.samples() - 1, state_index(i, kDeltaSlot))));
    }
  }
  j["final_delta_max"] = end;
  j["u_pre_max"] = traj.u_pre.size() ? traj.u_pre.cwiseAbs().maxCoeff() : 0.0;
  return j;
}

Json synthesis_summary(const SynthesisResult& res) {
  Json j;
  j["method"] = to_string(res.method);
  j["certified"] = res.certified;
  j["margin"] = res.margin;
  j["eq_residual"] = res.eq_residual;
  j["r_scale"] = res.r_scale;
  j["message"] = res.message;
  return j;
}

SynthesisResult run_synthesis(const std::vector<LinearMode>& modes, const QsrSpec& qsr,
                              const std::string& method, std::ostream& err) {
  if (method == "alternating") {
    SynthesisResult res = synthesize_alternating(modes, qsr);
    err << "warning: " << res.message << "\n";
    return res;
  }
  SynthesisResult res = synthesize(modes, qsr);
  if (res.certified || method == "direct") return res;
  err << "note: " << res.message << "; falling back to the alternating method\n";
  SynthesisResult alt = synthesize_alternating(modes, qsr);
  err << "warning: " << alt.message << "\n";
  return alt;
}

// ---------------------------------------------------------------------------

struct PowerflowArgs {
  std::string network;
  int slack = 0;
  double tol = 1e-8;
  int max_iter = 30;
  std::string out;
};

int cmd_powerflow(const PowerflowArgs& a, const Common& common,
                  const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest = start_manifest("powerflow", args, common);
  manifest.add_input("network", a.network);
  PowerFlowOptions opts;
  opts.slack_id = a.slack;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  const SwitchedSystem sys = load_system(a.network, opts);
  const auto& net = sys.network();
  const auto& op = sys.operating_point();

  Json doc;
  doc["slack_id"] = net.buses()[op.slack].id;
  doc["iterations"] = op.iterations;
  doc["residual"] = op.residual;
  Json buses = Json::array();
  for (int i = 0; i < net.size(); ++i) {
    Json b;
    b["id"] = net.buses()[i].id;
    b["v"] = op.state.v(i);
    b["delta_deg"] = op.state.delta(i) * 180.0 / M_PI;
    b["p_inj"] = op.p_inj(i);
    b["q_inj"] = op.q_inj(i);
    buses.push_back(std::move(b));
  }
  doc["buses"] = std::move(buses);
  const std::string text = doc.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_file(a.out, text);
    manifest.outputs.push_back(a.out);
    write_manifest(manifest, manifest_path_for(a.out));
  }
  return kExitOk;
}

struct LinearizeArgs {
  std::string network;
  std::optional<long long> mode;
  std::string out;
};

int cmd_linearize(const LinearizeArgs& a, const Common& common,
                  const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest = start_manifest("linearize", args, common);
  manifest.add_input("network", a.network);
  const SwitchedSystem sys = load_system(a.network);
  std::vector<LinearMode> modes;
  if (a.mode) {
    const long long count = 1LL << sys.bus_count();
    if (*a.mode < 0 || *a.mode >= count) {
      throw ValidationError("mode bitmask must be in [0, " + std::to_string(count - 1) + "]");
    }
    modes.push_back(linearize_mode(
        sys, SwitchMode::from_index(sys.bus_count(), static_cast<std::uint32_t>(*a.mode))));
  } else {
    modes = enumerate_modes(sys);
  }
  Json doc;
  doc["states"] = sys.state_dim();
  doc["channels"] = sys.channel_dim();
  doc["h"] = matrix_rows(modes.front().h);
  Json jm = Json::object();
  for (const auto& md : modes) {
    Json e;
    e["sigma"] = sigma_json(md.mode);
    e["a"] = matrix_rows(md.a);
    e["b1"] = matrix_rows(md.b1);
    e["b2"] = matrix_rows(md.b2);
    e["c"] = matrix_rows(md.c);
    e["d"] = matrix_rows(md.d);
    jm[std::to_string(md.mode.index())] = std::move(e);
  }
  doc["modes"] = std::move(jm);
  const std::string text = doc.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_file(a.out, text);
    manifest.outputs.push_back(a.out);
    write_manifest(manifest, manifest_path_for(a.out));
  }
  return kExitOk;
}

struct SynthesizeArgs {
  std::string network;
  std::string qsr = "default";
  std::string method = "direct";
  std::string out;
};

int cmd_synthesize(const SynthesizeArgs& a, const Common& common,
                   const std::vector<std::string>& args, std::ostream& err) {
  RunManifest manifest = start_manifest("synthesize", args, common);
  manifest.add_input("network", a.network);
  if (a.qsr != "default") manifest.add_input("qsr", a.qsr);
  const SwitchedSystem sys = load_system(a.network);
  const auto modes = enumerate_modes(sys);
  const QsrSpec qsr = resolve_qsr(a.qsr, static_cast<int>(modes.size()), sys.channel_dim());
  const SynthesisResult res = run_synthesis(modes, qsr, a.method, err);
  write_file(a.out, gains_to_json(res) + "\n");
  manifest.outputs.push_back(a.out);
  write_manifest(manifest, manifest_path_for(a.out));
  if (a.method == "direct" && !res.certified) {
    err << "error: " << res.message << " (best attempt written with certified=false)\n";
    return kExitSoftware;
  }
  if (res.certified) err << res.message << "\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string network;
  std::string gains;
  std::string scenario;
  std::string out;
  std::string svg;
  std::string comparator;
};

int cmd_simulate(const SimulateArgs& a, const Common& common,
                 const std::vector<std::string>& args, std::ostream& err) {
  RunManifest manifest = start_manifest("simulate", args, common);
  manifest.add_input("network", a.network);
  manifest.add_input("scenario", a.scenario);
  const SwitchedSystem sys = load_system(a.network);
  Scenario sc = load_scenario(a.scenario, sys.bus_count());
  if (!a.comparator.empty()) {
    sc.comparator = a.comparator == "angle-droop-hold" ? Controller::kAngleDroopHold : Controller::kMafd;
  }
  fs::path gains_path = a.gains;
  if (gains_path.empty() && !sc.controller.empty()) {
    gains_path = fs::path(sc.controller).is_absolute()
                     ? fs::path(sc.controller)
                     : fs::path(a.scenario).parent_path() / sc.controller;
  }
  GainSchedule schedule;
  if (!gains_path.empty()) {
    manifest.add_input("gains", gains_path);
    const SynthesisResult res = load_gains(gains_path);
    schedule = GainSchedule(res);
    if (res.p.rows() != sys.state_dim()) {
      throw DimensionError("gains were synthesized for " + std::to_string(res.p.rows() / 3) +
                           " buses, network has " + std::to_string(sys.bus_count()));
    }
    if (!res.certified) err << "warning: gains are not certified\n";
  }
  schedule.check(sys.channel_dim());
  const Trajectory traj = run(sys, schedule, sc);
  export_csv(traj, a.out);
  manifest.outputs.push_back(a.out);
  if (!a.svg.empty()) {
    export_svg(trajectory_svg(traj, fs::path(a.scenario).stem().string()), a.svg);
    manifest.outputs.push_back(a.svg);
  }
  write_manifest(manifest, manifest_path_for(a.out));
  if (traj.diverged) {
    err << "error: trajectory diverged at t = " << traj.t.back() << " s (truncated)\n";
    return kExitSoftware;
  }
  return kExitOk;
}

struct VerifyArgs {
  std::string trajectory;
  std::string gains;
  std::string network;
  std::string out;
};

int cmd_verify(const VerifyArgs& a, const Common& common, const std::vector<std::string>& args,
               std::ostream& out, std::ostream& err) {
  RunManifest manifest = start_manifest("verify", args, common);
  manifest.add_input("trajectory", a.trajectory);
  manifest.add_input("gains", a.gains);
  const Trajectory traj = load_trajectory_csv(a.trajectory);
  const SynthesisResult res = load_gains(a.gains);
  const int ns = 3 * traj.bus_count;
  if (res.p.rows() != ns) {
    throw DimensionError("storage matrix is " + std::to_string(res.p.rows()) + "x" +
                         std::to_string(res.p.cols()) + ", trajectory has " +
                         std::to_string(ns) + " states");
  }

  Json checks = Json::array();
  bool asserted_fail = false;
  bool advisory_fail = false;
  auto record = [&](const std::string& name, bool asserted, bool passed, Json detail) {
    Json c;
    c["name"] = name;
    c["kind"] = asserted ? "asserted" : "advisory";
    c["passed"] = passed;
    c["detail"] = std::move(detail);
    checks.push_back(std::move(c));
    if (!passed) (asserted ? asserted_fail : advisory_fail) = true;
  };

  bool finite = traj.x.allFinite() && traj.y.allFinite() && traj.w.allFinite();
  double x_max = traj.samples() ? traj.x.cwiseAbs().maxCoeff() : 0.0;
  record("bounded", true, finite && x_max < kDivergenceThreshold,
         Json{{"max_abs_state", x_max}, {"threshold", kDivergenceThreshold}});

  record("certified_gains", false, res.certified,
         Json{{"method", to_string(res.method)}, {"message", res.message}});

  if (!a.network.empty()) {
    manifest.add_input("network", a.network);
    const SwitchedSystem sys = load_system(a.network);
    if (sys.state_dim() != ns) throw DimensionError("network does not match the trajectory");
    const CertificateReport cert = verify_certificate(res, enumerate_modes(sys));
    record("certificate", res.certified, cert.passed,
           Json{{"p_min_eig", cert.p_min_eig},
                {"min_block_eig", cert.min_block_eig},
                {"max_eq_residual", cert.max_eq_residual},
                {"forms_agree", cert.all_agree}});
  }

  Json diss_json = nullptr;
  if (traj.samples() > 0) {
    const double w_max = traj.w.size() ? traj.w.cwiseAbs().maxCoeff() : 0.0;
    const DissipationReport diss = dissipation_check(traj, res.p, res.qsr);
    diss_json = Json::parse(dissipation_to_json(diss));
    const bool small = w_max <= kSmallSignalAmplitude;
    record("dissipation", small, diss.passed,
           Json{{"min_slack", diss.min_slack},
                {"tolerance", diss.tolerance},
                {"max_abs_w", w_max},
                {"small_signal", small}});
    if (w_max == 0.0) {
      const double x0 = traj.x.row(0).norm();
      const bool small_x0 = x0 <= kSmallInitialState;
      record("storage_nonincreasing", small_x0, diss.max_storage_rise <= diss.tolerance,
             Json{{"max_storage_rise", diss.max_storage_rise},
                  {"tolerance", diss.tolerance},
                  {"x0_norm", x0}});
    }
  }

  Json doc;
  doc["trajectory"] = a.trajectory;
  doc["gains"] = a.gains;
  doc["samples"] = traj.samples();
  doc["checks"] = std::move(checks);
  doc["dissipation"] = std::move(diss_json);
  if (traj.samples() > 0) {
    const TransientMetrics tm = transient_metrics(traj);
    doc["metrics"] = Json::parse(metrics_to_json(tm));
  }
  const int code = asserted_fail ? kExitAssertedFailure
                                 : (advisory_fail ? kExitAdvisoryFailure : kExitOk);
  doc["exit_code"] = code;
  const std::string text = doc.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_file(a.out, text);
    manifest.outputs.push_back(a.out);
    write_manifest(manifest, manifest_path_for(a.out));
  }
  if (code != kExitOk) {
    err << (asserted_fail ? "asserted check failed\n" : "advisory check failed\n");
  }
  return code;
}

struct ReportArgs {
  int case_id = 1;
  std::string out;
  std::string data_dir;
  std::string method = "auto";
  std::string gains;
};

std::vector<double> column(const Trajectory& traj, int c) {
  std::vector<double> v(traj.samples());
  for (int k = 0; k < traj.samples(); ++k) v[k] = traj.x(k, c);
  return v;
}

int cmd_report(const ReportArgs& a, const Common& common, const std::vector<std::string>& args,
               std::ostream& err) {
  RunManifest manifest = start_manifest("report", args, common);
  fs::path data = a.data_dir;
  if (data.empty()) {
    const char* env = std::getenv("MAFD_DATA_DIR");
    data = env ? fs::path(env) : fs::path(MAFD_DEFAULT_DATA_DIR);
  }
  const fs::path network = data / (a.case_id == 1 ? "case3.json" : "case123x5.json");
  const fs::path scenario = data / "scenarios" / (a.case_id == 1 ? "case1.json" : "case2.json");
  manifest.add_input("network", network);
  manifest.add_input("scenario", scenario);
  const fs::path dir = a.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const SwitchedSystem sys = load_system(network);
  const auto modes = enumerate_modes(sys);
  SynthesisResult res;
  if (!a.gains.empty()) {
    manifest.add_input("gains", a.gains);
    res = load_gains(a.gains);
  } else {
    const QsrSpec qsr = QsrSpec::defaults(static_cast<int>(modes.size()), sys.channel_dim());
    res = run_synthesis(modes, qsr, a.method, err);
  }
  const GainSchedule schedule(res);
  schedule.check(sys.channel_dim());
  write_file(dir / "gains.json", gains_to_json(res) + "\n");

  Scenario sc = load_scenario(scenario, sys.bus_count());
  const Trajectory mafd = run_scenario(sys, schedule, sc);
  const Trajectory comp = run_comparator(sys, schedule, sc);
  export_csv(mafd, dir / "mafd.csv");
  export_csv(comp, dir / "comparator.csv");
  const std::string label = "Case " + std::to_string(a.case_id);
  export_svg(trajectory_svg(mafd, label + ": MAFD"), dir / "mafd.svg");
  export_svg(trajectory_svg(comp, label + ": angle droop with held angle"), dir / "comparator.svg");

  std::vector<PlotPanel> panels;
  for (int i = 0; i < sys.bus_count(); ++i) {
    const int c = state_index(i, kDeltaSlot);
    panels.push_back({"Angle deviation, bus " + std::to_string(i + 1), "rad",
                      {{"MAFD", mafd.t, column(mafd, c)}, {"comparator", comp.t, column(comp, c)}}});
  }
  export_svg(render_svg(label + ": angle deviation", panels), dir / "comparison.svg");

  Json doc;
  doc["case"] = a.case_id;
  doc["network"] = network.string();
  doc["scenario"] = scenario.string();
  doc["synthesis"] = synthesis_summary(res);
  Json jm = metrics_json(mafd);
  Json jc = metrics_json(comp);
  const double pm = jm["peak_delta_max"].get<double>();
  const double pc = jc["peak_delta_max"].get<double>();
  doc["mafd"] = std::move(jm);
  doc["comparator"] = std::move(jc);
  doc["peak_ratio"] = pm > 0.0 ? pc / pm : 0.0;
  doc["comparator_peak_exceeds_mafd"] = pc > pm;
  if (!mafd.diverged) {
    doc["dissipation"] = Json::parse(dissipation_to_json(dissipation_check(mafd, res.p, res.qsr)));
  }
  write_file(dir / "metrics.json", doc.dump(2) + "\n");

  for (const char* f : {"gains.json", "mafd.csv", "comparator.csv", "mafd.svg", "comparator.svg",
                        "comparison.svg", "metrics.json"}) {
    manifest.outputs.push_back(dir / f);
  }
  write_manifest(manifest, dir / "manifest.json");
  err << "report written to " << dir.string() << "\n";
  return mafd.diverged ? kExitSoftware : kExitOk;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream s;
  for (unsigned int i = 0; i < len; ++i) {
    s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return s.str();
}

void RunManifest::add_input(const std::string& role, const fs::path& path) {
  const std::string bytes = read_file(path);
  inputs.push_back({role, path, sha256_hex(bytes), bytes.size()});
}

void RunManifest::finalize() {
  std::string material;
  for (const auto& in : inputs) {
    material += in.role + '\0' + std::to_string(in.bytes) + '\0' + in.sha256 + '\0';
  }
  config_hash = sha256_hex(material);
  finished_utc = utc_now();
}

std::string RunManifest::to_json() const {
  Json j;
  j["tool"] = "mafd";
  j["version"] = MAFD_VERSION;
  j["command"] = command;
  j["arguments"] = arguments;
  Json ins = Json::array();
  for (const auto& in : inputs) {
    ins.push_back(Json{{"role", in.role}, {"path", in.path.string()}, {"bytes", in.bytes},
                       {"sha256", in.sha256}});
  }
  j["inputs"] = std::move(ins);
  Json outs = Json::array();
  for (const auto& o : outputs) outs.push_back(o.string());
  j["outputs"] = std::move(outs);
  j["config_hash"] = config_hash;
  j["seed"] = seed_given ? Json(seed) : Json(nullptr);
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  return j.dump(2) + "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed angle/frequency droop secondary control toolkit", "mafd"};
  app.set_version_flag("--version", MAFD_VERSION);
  app.require_subcommand(1);
  Common common;

  PowerflowArgs pf;
  auto* s_pf = app.add_subcommand("powerflow", "Solve the AC power flow of a network");
  s_pf->add_option("--network", pf.network, "Network JSON")->required();
  s_pf->add_option("--slack", pf.slack, "Slack bus id (default: first bus)");
  s_pf->add_option("--tol", pf.tol, "Mismatch tolerance")->check(CLI::PositiveNumber);
  s_pf->add_option("--max-iter", pf.max_iter, "Newton iteration cap")->check(CLI::PositiveNumber);
  s_pf->add_option("--out", pf.out, "Output JSON (default: stdout)");
  attach_seed(s_pf, common);

  LinearizeArgs lin;
  auto* s_lin = app.add_subcommand("linearize", "Linearize every switching mode");
  s_lin->add_option("--network", lin.network, "Network JSON")->required();
  s_lin->add_option("--mode", lin.mode, "Single mode bitmask (bit i set: bus i+1 in frequency droop)");
  s_lin->add_option("--out", lin.out, "Output JSON (default: stdout)");
  attach_seed(s_lin, common);

  SynthesizeArgs syn;
  auto* s_syn = app.add_subcommand("synthesize", "Synthesize mode-dependent output-feedback gains");
  s_syn->add_option("--network", syn.network, "Network JSON")->required();
  s_syn->add_option("--qsr", syn.qsr, "Supply-rate JSON or 'default'");
  s_syn->add_option("--method", syn.method, "direct | alternating | auto")
      ->check(CLI::IsMember({"direct", "alternating", "auto"}));
  s_syn->add_option("--out", syn.out, "Gains JSON")->required();
  attach_seed(s_syn, common);

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Simulate a scenario on the nonlinear switched model");
  s_sim->add_option("--network", sim.network, "Network JSON")->required();
  s_sim->add_option("--gains", sim.gains, "Gains JSON (default: scenario controller, else none)");
  s_sim->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
  s_sim->add_option("--out", sim.out, "Trajectory CSV")->required();
  s_sim->add_option("--svg", sim.svg, "Also plot the trajectory");
  s_sim->add_option("--comparator", sim.comparator, "Override: mafd | angle-droop-hold")
      ->check(CLI::IsMember({"mafd", "angle-droop-hold"}));
  attach_seed(s_sim, common);

  VerifyArgs ver;
  auto* s_ver = app.add_subcommand("verify", "Check a trajectory against the gains' storage and supply rate");
  s_ver->add_option("--trajectory", ver.trajectory, "Trajectory CSV")->required();
  s_ver->add_option("--gains", ver.gains, "Gains JSON")->required();
  s_ver->add_option("--network", ver.network, "Also re-check the LMI certificate");
  s_ver->add_option("--out", ver.out, "Report JSON (default: stdout)");
  attach_seed(s_ver, common);

  ReportArgs rep;
  auto* s_rep = app.add_subcommand("report", "Run the Case 1 or Case 2 pipeline end to end");
  s_rep->add_option("--case", rep.case_id, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  s_rep->add_option("--out", rep.out, "Output directory")->required();
  s_rep->add_option("--data-dir", rep.data_dir, "Bundled data directory");
  s_rep->add_option("--method", rep.method, "direct | alternating | auto")
      ->check(CLI::IsMember({"direct", "alternating", "auto"}));
  s_rep->add_option("--gains", rep.gains, "Reuse a gains JSON instead of synthesizing");
  attach_seed(s_rep, common);

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("mafd");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (args.empty()) err << app.help();
    return kExitUsage;
  }

  try {
    if (s_pf->parsed()) return cmd_powerflow(pf, common, args, out);
    if (s_lin->parsed()) return cmd_linearize(lin, common, args, out);
    if (s_syn->parsed()) return cmd_synthesize(syn, common, args, err);
    if (s_sim->parsed()) return cmd_simulate(sim, common, args, err);
    if (s_ver->parsed()) return cmd_verify(ver, common, args, out, err);
    if (s_rep->parsed()) {
      if (rep.method == "direct" && rep.gains.empty()) {
        // report needs gains even when the direct search fails
        rep.method = "auto";
      }
      return cmd_report(rep, common, args, err);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNoInput;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSoftware;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSoftware;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataErr;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataErr;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace mafd::cli
