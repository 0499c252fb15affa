#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace mafd::cli {

// sysexits(3) values.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitDataErr = 65;
inline constexpr int kExitNoInput = 66;
inline constexpr int kExitSoftware = 70;

// verify
inline constexpr int kExitAssertedFailure = 1;
inline constexpr int kExitAdvisoryFailure = 2;

struct ManifestInput {
  std::string role;
  std::filesystem::path path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Provenance of one invocation. `config_hash` is SHA-256 over the role,
/// length and content of every input file in order.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::vector<ManifestInput> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string config_hash;
  long long seed = 0;
  bool seed_given = false;
  std::string started_utc;
  std::string finished_utc;

  /// Hashes the file and appends it. Throws IoError if it cannot be read.
  void add_input(const std::string& role, const std::filesystem::path& path);
  void finalize();
  std::string to_json() const;
};

std::string sha256_hex(const std::string& bytes);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mafd::cli
