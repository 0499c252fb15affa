// Rewrites the bus shunts of a network file so that its reference voltages
// and angles are an exact power-flow solution of its reference injections.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mafd/errors.hpp"
#include "mafd/grid_model.hpp"
#include "mafd/power_flow.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw mafd::IoError("cannot open '" + path + "'");
  std::string text;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrate bus shunts against the reference operating point"};
  std::string in_path;
  std::string out_path;
  app.add_option("template", in_path, "Network file with reference values")->required();
  app.add_option("-o,--out", out_path, "Output network file (default: stdout)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 64;
  }

  try {
    const std::string text = slurp(in_path);
    const mafd::NetworkModel raw = mafd::parse_network(text);
    const auto buses = mafd::calibrate_bus_shunts(raw.buses(), raw.lines());
    const mafd::NetworkModel net(buses, raw.lines(), raw.droop(), raw.omega_ref());
    const auto op = mafd::solve_power_flow(net);

    const auto doc = nlohmann::ordered_json::parse(mafd::network_to_json(net));
    const auto src = nlohmann::ordered_json::parse(text);
    nlohmann::ordered_json ordered;
    for (const char* key : {"name", "description"}) {
      if (src.contains(key)) ordered[key] = src[key];
    }
    ordered.update(doc);
    const std::string out = ordered.dump(2) + "\n";
    if (out_path.empty()) {
      std::cout << out;
    } else {
      std::FILE* f = std::fopen(out_path.c_str(), "wb");
      if (!f || std::fwrite(out.data(), 1, out.size(), f) != out.size()) {
        if (f) std::fclose(f);
        throw mafd::IoError("cannot write '" + out_path + "'");
      }
      std::fclose(f);
    }
    std::cerr << "power-flow residual " << op.residual << " after " << op.iterations
              << " iterations\n";
    return 0;
  } catch (const mafd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 66;
  } catch (const mafd::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 70;
  } catch (const mafd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 65;
  }
}
