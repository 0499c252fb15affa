#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mafd {

using ComplexMatrix = Eigen::MatrixXcd;

/// One bus (one microgrid point of common coupling). Angles in radians.
struct BusSpec {
  int id = 0;
  double v_ref = 1.0;
  double delta_ref = 0.0;
  double p_inj_ref = 0.0;
  double q_inj_ref = 0.0;
  double p_load_ref = 0.0;
  double q_load_ref = 0.0;
  // Shunt admittance at the bus, added to Y[j][j] at full value.
  double g_shunt = 0.0;
  double b_shunt = 0.0;
};

/// Series branch between two buses, pi model with total charging b_shunt.
struct LineSpec {
  int from = 0;  // bus id
  int to = 0;    // bus id
  double g = 0.0;
  double b = 0.0;
  double b_shunt = 0.0;
};

/// Equivalent inertia and damping of the three primary control loops.
struct DroopParams {
  double j_delta = 1.0;
  double d_delta = 1.0;
  double j_omega = 1.0;
  double d_omega = 1.0;
  double j_v = 1.0;
  double d_v = 1.0;
};

/// Bus admittance matrix: Y[j][j] collects incident series admittances,
/// half of each line's charging and the bus shunt; Y[j][k] = -(g + ib).
/// Throws ValidationError when a line references an unknown bus id.
ComplexMatrix assemble_ybus(const std::vector<BusSpec>& buses,
                            const std::vector<LineSpec>& lines);

/// Immutable, validated microgrid network.
class NetworkModel {
 public:
  /// Validates every invariant and assembles the admittance matrix.
  NetworkModel(std::vector<BusSpec> buses, std::vector<LineSpec> lines,
               std::vector<DroopParams> droop, double omega_ref);

  int size() const { return static_cast<int>(buses_.size()); }
  const std::vector<BusSpec>& buses() const { return buses_; }
  const std::vector<LineSpec>& lines() const { return lines_; }
  const std::vector<DroopParams>& droop() const { return droop_; }
  const DroopParams& droop(int bus) const { return droop_.at(bus); }
  const ComplexMatrix& ybus() const { return ybus_; }
  /// Nominal angular frequency in rad/s.
  double omega_ref() const { return omega_ref_; }

  /// Position of the bus with the given id; throws ValidationError if absent.
  int index_of(int bus_id) const;

 private:
  std::vector<BusSpec> buses_;
  std::vector<LineSpec> lines_;
  std::vector<DroopParams> droop_;
  ComplexMatrix ybus_;
  double omega_ref_;
};

/// Parses a network document (see docs in README for the schema).
/// Throws ParseError on malformed input and ValidationError on invariant
/// violations.
NetworkModel parse_network(const std::string& text);

/// Reads and parses a network file. Throws IoError if unreadable.
NetworkModel load_network(const std::filesystem::path& path);

/// Serializes a network to the same schema parse_network accepts.
std::string network_to_json(const NetworkModel& network, int indent = 2);

}  // namespace mafd
