#pragma once

// Command orchestration behind the tdstab executable. Argument parsing
// lives in the tool; run() validates and executes a parsed config.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "tdstab/core.hpp"

namespace tdstab {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalid = 2,
  kExitNominalUnstable = 3,
  kExitInconclusive = 4,
  kExitCounterexample = 5,
};

struct CommandConfig {
  std::string subcommand;  ///< analyze | margin | verify-bound | simulate | reproduce
  std::string target;      ///< reproduce: table1 | remark1 | remark2 | remark3
  std::optional<std::string> system_path;
  std::string method = "both";  ///< freq | lmi | both
  std::optional<std::string> delay_case;
  std::optional<double> p;
  std::optional<double> d;
  std::optional<double> mu;
  std::uint64_t trials = 500;
  std::uint64_t seed = 1;
  std::optional<double> dt;
  std::optional<double> T;
  std::string out = ".";
  double tol_mu = 1e-3;
  std::string delay = "random";  ///< simulate: constant | sine | sawtooth | switching | random
};

/// The two-state example plant used by the reproduction commands.
LtiDelaySystem example_system();

/// Executes the command, writing reports into config.out and a summary to
/// `log`. Returns one of the ExitCode values.
int run(const CommandConfig& config, std::ostream& log);

/// Writes content to path via a temporary file and rename.
void write_atomic(const std::string& path, const std::string& content);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tdstab
