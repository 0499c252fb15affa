#include "mafd/grid_model.hpp"

#include <cmath>
#include <numbers>
#include <queue>
#include <set>
#include <utility>

#include "json_util.hpp"
#include "mafd/errors.hpp"

namespace mafd {
namespace {

using detail::Json;

constexpr double kDegToRad = std::numbers::pi / 180.0;

int find_bus(const std::vector<BusSpec>& buses, int id) {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

void validate_droop(const DroopParams& d, int bus_id) {
  const std::pair<const char*, double> fields[] = {
      {"j_delta", d.j_delta}, {"d_delta", d.d_delta}, {"j_omega", d.j_omega},
      {"d_omega", d.d_omega}, {"j_v", d.j_v},         {"d_v", d.d_v}};
  for (const auto& [name, value] : fields) {
    if (!positive_finite(value)) {
      throw ValidationError("droop parameter " + std::string(name) + " of bus " +
                            std::to_string(bus_id) + " must be strictly positive");
    }
  }
}

}  // namespace

ComplexMatrix assemble_ybus(const std::vector<BusSpec>& buses,
                            const std::vector<LineSpec>& lines) {
  const auto n = static_cast<Eigen::Index>(buses.size());
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& line : lines) {
    const int a = find_bus(buses, line.from);
    const int b = find_bus(buses, line.to);
    if (a < 0 || b < 0) {
      throw ValidationError("line " + std::to_string(line.from) + "-" + std::to_string(line.to) +
                            " references an unknown bus");
    }
    const std::complex<double> series(line.g, line.b);
    const std::complex<double> half_charging(0.0, 0.5 * line.b_shunt);
    y(a, a) += series + half_charging;
    y(b, b) += series + half_charging;
    y(a, b) -= series;
    y(b, a) -= series;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, i) += std::complex<double>(buses[i].g_shunt, buses[i].b_shunt);
  }
  return y;
}

NetworkModel::NetworkModel(std::vector<BusSpec> buses, std::vector<LineSpec> lines,
                           std::vector<DroopParams> droop, double omega_ref)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      droop_(std::move(droop)),
      omega_ref_(omega_ref) {
  if (buses_.empty()) throw ValidationError("network has no buses");
  if (!positive_finite(omega_ref_)) throw ValidationError("omega_ref must be positive");
  if (droop_.size() != buses_.size()) {
    throw ValidationError("expected one droop record per bus");
  }

  std::set<int> ids;
  for (const auto& bus : buses_) {
    if (!ids.insert(bus.id).second) {
      throw ValidationError("duplicate bus id " + std::to_string(bus.id));
    }
    if (!positive_finite(bus.v_ref)) {
      throw ValidationError("v_ref of bus " + std::to_string(bus.id) + " must be positive");
    }
    const double values[] = {bus.delta_ref,  bus.p_inj_ref,  bus.q_inj_ref, bus.p_load_ref,
                             bus.q_load_ref, bus.g_shunt,    bus.b_shunt};
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw ValidationError("bus " + std::to_string(bus.id) + " has a non-finite field");
      }
    }
  }
  for (std::size_t i = 0; i < droop_.size(); ++i) validate_droop(droop_[i], buses_[i].id);

  std::set<std::pair<int, int>> pairs;
  for (const auto& line : lines_) {
    if (line.from == line.to) {
      throw ValidationError("line endpoints must differ (bus " + std::to_string(line.from) + ")");
    }
    if (!std::isfinite(line.g) || !std::isfinite(line.b) || !std::isfinite(line.b_shunt)) {
      throw ValidationError("line has a non-finite parameter");
    }
    const auto key = std::minmax(line.from, line.to);
    if (!pairs.insert(key).second) {
      throw ValidationError("duplicate line between buses " + std::to_string(key.first) +
                            " and " + std::to_string(key.second));
    }
  }

  ybus_ = assemble_ybus(buses_, lines_);

  // Breadth-first search over the line list from bus 0.
  const int n = size();
  std::vector<std::vector<int>> adjacency(n);
  for (const auto& line : lines_) {
    const int a = index_of(line.from);
    const int b = index_of(line.to);
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int reached = 1;
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop();
    for (int next : adjacency[cur]) {
      if (!seen[next]) {
        seen[next] = true;
        ++reached;
        frontier.push(next);
      }
    }
  }
  if (reached != n) throw ValidationError("network graph is not connected");
}

int NetworkModel::index_of(int bus_id) const {
  const int idx = find_bus(buses_, bus_id);
  if (idx < 0) throw ValidationError("unknown bus id " + std::to_string(bus_id));
  return idx;
}

NetworkModel parse_network(const std::string& text) {
  const Json root = detail::parse_json(text, "network");
  detail::require_keys(root, {"name", "description", "omega_ref_hz", "buses", "lines", "droop"},
                       "network");
  const double omega_ref = 2.0 * std::numbers::pi * detail::get_number(root, "omega_ref_hz", "network");

  std::vector<BusSpec> buses;
  for (const auto& jb : detail::get_array(root, "buses", "network")) {
    detail::require_keys(jb,
                         {"id", "v_ref", "delta_ref_deg", "p_inj_ref", "q_inj_ref", "p_load_ref",
                          "q_load_ref", "g_shunt", "b_shunt"},
                         "network.buses[]");
    BusSpec bus;
    bus.id = detail::get_int(jb, "id", "bus");
    bus.v_ref = detail::get_number(jb, "v_ref", "bus");
    bus.delta_ref = detail::get_number(jb, "delta_ref_deg", "bus") * kDegToRad;
    bus.p_inj_ref = detail::get_number(jb, "p_inj_ref", "bus");
    bus.q_inj_ref = detail::get_number(jb, "q_inj_ref", "bus");
    bus.p_load_ref = detail::get_number_or(jb, "p_load_ref", 0.0, "bus");
    bus.q_load_ref = detail::get_number_or(jb, "q_load_ref", 0.0, "bus");
    bus.g_shunt = detail::get_number_or(jb, "g_shunt", 0.0, "bus");
    bus.b_shunt = detail::get_number_or(jb, "b_shunt", 0.0, "bus");
    buses.push_back(bus);
  }

  std::vector<LineSpec> lines;
  for (const auto& jl : detail::get_array(root, "lines", "network")) {
    detail::require_keys(jl, {"from", "to", "g", "b", "b_shunt"}, "network.lines[]");
    LineSpec line;
    line.from = detail::get_int(jl, "from", "line");
    line.to = detail::get_int(jl, "to", "line");
    line.g = detail::get_number(jl, "g", "line");
    line.b = detail::get_number(jl, "b", "line");
    line.b_shunt = detail::get_number_or(jl, "b_shunt", 0.0, "line");
    lines.push_back(line);
  }

  // Droop records are keyed by bus id and reordered to match `buses`.
  std::vector<DroopParams> droop(buses.size());
  std::vector<bool> assigned(buses.size(), false);
  for (const auto& jd : detail::get_array(root, "droop", "network")) {
    detail::require_keys(jd, {"bus", "j_delta", "d_delta", "j_omega", "d_omega", "j_v", "d_v"},
                         "network.droop[]");
    const int id = detail::get_int(jd, "bus", "droop");
    const int idx = find_bus(buses, id);
    if (idx < 0) throw ValidationError("droop record for unknown bus " + std::to_string(id));
    if (assigned[idx]) throw ValidationError("duplicate droop record for bus " + std::to_string(id));
    assigned[idx] = true;
    DroopParams& d = droop[idx];
    d.j_delta = detail::get_number(jd, "j_delta", "droop");
    d.d_delta = detail::get_number(jd, "d_delta", "droop");
    d.j_omega = detail::get_number(jd, "j_omega", "droop");
    d.d_omega = detail::get_number(jd, "d_omega", "droop");
    d.j_v = detail::get_number(jd, "j_v", "droop");
    d.d_v = detail::get_number(jd, "d_v", "droop");
  }
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!assigned[i]) {
      throw ValidationError("missing droop record for bus " + std::to_string(buses[i].id));
    }
  }

  return NetworkModel(std::move(buses), std::move(lines), std::move(droop), omega_ref);
}

NetworkModel load_network(const std::filesystem::path& path) {
  return parse_network(detail::read_text_file(path));
}

std::string network_to_json(const NetworkModel& network, int indent) {
  Json root;
  root["omega_ref_hz"] = network.omega_ref() / (2.0 * std::numbers::pi);
  Json buses = Json::array();
  for (const auto& b : network.buses()) {
    buses.push_back({{"id", b.id},
                     {"v_ref", b.v_ref},
                     {"delta_ref_deg", b.delta_ref / kDegToRad},
                     {"p_inj_ref", b.p_inj_ref},
                     {"q_inj_ref", b.q_inj_ref},
                     {"p_load_ref", b.p_load_ref},
                     {"q_load_ref", b.q_load_ref},
                     {"g_shunt", b.g_shunt},
                     {"b_shunt", b.b_shunt}});
  }
  Json lines = Json::array();
  for (const auto& l : network.lines()) {
    lines.push_back({{"from", l.from}, {"to", l.to}, {"g", l.g}, {"b", l.b}, {"b_shunt", l.b_shunt}});
  }
  Json droop = Json::array();
  for (int i = 0; i < network.size(); ++i) {
    const auto& d = network.droop(i);
    droop.push_back({{"bus", network.buses()[i].id},
                     {"j_delta", d.j_delta},
                     {"d_delta", d.d_delta},
                     {"j_omega", d.j_omega},
                     {"d_omega", d.d_omega},
                     {"j_v", d.j_v},
                     {"d_v", d.d_v}});
  }
  root["buses"] = std::move(buses);
  root["lines"] = std::move(lines);
  root["droop"] = std::move(droop);
  return root.dump(indent);
}

}  // namespace mafd
