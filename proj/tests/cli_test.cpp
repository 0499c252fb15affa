#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "test_support.hpp"

namespace mafd {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("mafd_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    const Outcome r = run_cli({"synthesize", "--network", test::data_path("case3.json"), "--method",
                               "alternating", "--out", (dir_ / "gains3.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    write_file(dir_ / "small.json", R"({"t_end": 3.0, "step": 0.001,
      "switching": [{"t": 1.0, "sigma": [2, 1, 2]}, {"t": 2.0, "sigma": [1, 1, 1]}],
      "disturbance": [{"t": 0.5, "dp": [0.05, 0.05, 0.05], "dq": [0.05, 0.05, 0.05]},
                      {"t": 1.5, "dp": [0, 0, 0], "dq": [0, 0, 0]}],
      "saturation": {"p": 5, "q": 3}})");
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path dir_;
};

fs::path CliTest::dir_;

TEST_F(CliTest, NoArgumentsIsUsage) {
  const Outcome r = run_cli({});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("powerflow"), std::string::npos);
  EXPECT_EQ(run_cli({"synthesize", "--network", "x.json", "--out", "y", "--method", "magic"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"--version"}).code, 0);
}

TEST_F(CliTest, MissingFileIsNoInput) {
  const Outcome r = run_cli({"powerflow", "--network", (dir_ / "absent.json").string()});
  EXPECT_EQ(r.code, cli::kExitNoInput);
  EXPECT_NE(r.err.find("absent.json"), std::string::npos);
}

TEST_F(CliTest, MalformedDocumentIsDataError) {
  write_file(dir_ / "broken.json", "{\"buses\": [");
  EXPECT_EQ(run_cli({"powerflow", "--network", (dir_ / "broken.json").string()}).code, cli::kExitDataErr);
}

TEST_F(CliTest, PowerflowWritesSolutionAndManifest) {
  const fs::path out = dir_ / "pf.json";
  const Outcome r = run_cli({"powerflow", "--network", test::data_path("case3.json"), "--out",
                             out.string(), "--seed", "42"});
  ASSERT_EQ(r.code, 0) << r.err;
  const nlohmann::json doc = read_json(out);
  ASSERT_EQ(doc["buses"].size(), 3u);
  EXPECT_NEAR(doc["buses"][1]["delta_deg"].get<double>(), 0.089, 0.05);
  EXPECT_LE(doc["residual"].get<double>(), 1e-8);
  const nlohmann::json man = read_json(dir_ / "pf.json.manifest.json");
  EXPECT_EQ(man["seed"].get<long>(), 42);
  EXPECT_EQ(man["command"], "powerflow");
  EXPECT_EQ(man["inputs"][0]["sha256"].get<std::string>().size(), 64u);
}

TEST_F(CliTest, ManifestHashFollowsInputs) {
  const fs::path net = dir_ / "net.json";
  fs::copy_file(test::data_path("case3.json"), net, fs::copy_options::overwrite_existing);
  const fs::path out = dir_ / "pf_hash.json";
  ASSERT_EQ(run_cli({"powerflow", "--network", net.string(), "--out", out.string()}).code, 0);
  const nlohmann::json first = read_json(dir_ / "pf_hash.json.manifest.json");
  EXPECT_TRUE(first["seed"].is_null());
  ASSERT_EQ(run_cli({"powerflow", "--network", net.string(), "--out", out.string()}).code, 0);
  EXPECT_EQ(read_json(dir_ / "pf_hash.json.manifest.json")["config_hash"], first["config_hash"]);
  std::ofstream(net, std::ios::app) << "\n";
  ASSERT_EQ(run_cli({"powerflow", "--network", net.string(), "--out", out.string()}).code, 0);
  EXPECT_NE(read_json(dir_ / "pf_hash.json.manifest.json")["config_hash"], first["config_hash"]);
}

TEST_F(CliTest, Sha256KnownAnswer) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(CliTest, LinearizeSingleMode) {
  const fs::path out = dir_ / "lin.json";
  ASSERT_EQ(run_cli({"linearize", "--network", test::data_path("case3.json"), "--mode", "5", "--out",
                     out.string()}).code, 0);
  const nlohmann::json doc = read_json(out);
  EXPECT_EQ(doc["states"].get<int>(), 9);
  ASSERT_TRUE(doc["modes"].contains("5"));
  EXPECT_EQ(doc["modes"]["5"]["a"].size(), 9u);
  EXPECT_EQ(run_cli({"linearize", "--network", test::data_path("case3.json"), "--mode", "8"}).code,
            cli::kExitDataErr);
}

TEST_F(CliTest, MismatchedGainsAreNumericFailure) {
  const Outcome r = run_cli({"simulate", "--network", test::data_path("case123x5.json"), "--gains",
                             (dir_ / "gains3.json").string(), "--scenario",
                             test::data_path("scenarios/case2.json"), "--out", (dir_ / "bad.csv").string()});
  EXPECT_EQ(r.code, cli::kExitSoftware);
  EXPECT_NE(r.err.find("gains"), std::string::npos);
}

TEST_F(CliTest, SimulateThenVerify) {
  const fs::path csv = dir_ / "small.csv";
  const Outcome sim = run_cli({"simulate", "--network", test::data_path("case3.json"), "--gains",
                               (dir_ / "gains3.json").string(), "--scenario", (dir_ / "small.json").string(),
                               "--out", csv.string(), "--svg", (dir_ / "small.svg").string()});
  ASSERT_EQ(sim.code, 0) << sim.err;
  EXPECT_TRUE(fs::exists(dir_ / "small.svg"));

  // Uncertified gains only fail the advisory check.
  const fs::path rep = dir_ / "verify.json";
  const Outcome ver = run_cli({"verify", "--trajectory", csv.string(), "--gains",
                               (dir_ / "gains3.json").string(), "--out", rep.string()});
  EXPECT_EQ(ver.code, cli::kExitAdvisoryFailure) << ver.err;
  const nlohmann::json doc = read_json(rep);
  bool saw_dissipation = false;
  for (const auto& c : doc["checks"]) {
    if (c["name"] == "dissipation") {
      saw_dissipation = true;
      EXPECT_EQ(c["kind"], "asserted");
      EXPECT_TRUE(c["passed"].get<bool>());
    }
    if (c["kind"] == "asserted") EXPECT_TRUE(c["passed"].get<bool>()) << c["name"];
  }
  EXPECT_TRUE(saw_dissipation);

  // A trajectory that left the bounded region fails an asserted check.
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  std::ostringstream bad;
  bad << header << "\n";
  const int cols = static_cast<int>(std::count(header.begin(), header.end(), ',')) + 1;
  for (int k = 0; k < 3; ++k) {
    bad << k * 0.001 << ",0";
    for (int c = 2; c < cols; ++c) bad << "," << (c == 2 ? 5e3 : 0.0);
    bad << "\n";
  }
  write_file(dir_ / "bad.csv", bad.str());
  EXPECT_EQ(run_cli({"verify", "--trajectory", (dir_ / "bad.csv").string(), "--gains",
                     (dir_ / "gains3.json").string()}).code,
            cli::kExitAssertedFailure);
}

TEST_F(CliTest, ReportCaseOne) {
  const fs::path out = dir_ / "report1";
  const Outcome r = run_cli({"report", "--case", "1", "--out", out.string(), "--gains",
                             (dir_ / "gains3.json").string(), "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"gains.json", "mafd.csv", "comparator.csv", "mafd.svg", "comparator.svg",
                        "comparison.svg", "metrics.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const nlohmann::json metrics = read_json(out / "metrics.json");
  EXPECT_TRUE(metrics["comparator_peak_exceeds_mafd"].get<bool>());
  EXPECT_EQ(read_json(out / "manifest.json")["seed"].get<long>(), 7);
  EXPECT_EQ(run_cli({"report", "--case", "3", "--out", out.string()}).code, cli::kExitUsage);
}

}  // namespace
}  // namespace mafd
