#pragma once

// Command-line workbench: run configuration from a structured-text file and
// flags, the subcommand pipelines and their JSON/CSV reports.

#include "mpcc/downfold.hpp"
#include "mpcc/ham.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mpcc::cli {

inline constexpr const char* kReportSchema = "mpcc.report/1";
inline constexpr const char* kTimingSchema = "mpcc.timing/1";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitConvergence = 2, kExitInvariant = 3 };

struct RunConfig {
  // system source: exactly one of these
  std::optional<std::filesystem::path> fcidump;
  std::optional<ModelSpec> model;
  /// Defaults: half filling for models, the FCIDUMP header otherwise.
  std::optional<int> electrons;
  std::optional<int> ms2;

  /// Active spin-orbitals; empty selects the HOMO and LUMO spatial orbitals.
  std::vector<int> active;
  int states = 1;
  /// Weighted minimization only; one per state, all 1 when empty.
  std::vector<double> weights;
  double overlap_tol = kDefaultOverlapTolerance;
  SolverConfig solver;
  /// Fixed-point sweep limit for the Hermitian pipelines.
  int max_sweeps = 30;
  bool newton = false;
  /// External ranks kept in the Newton ansatz; all when empty.
  std::vector<int> newton_ranks;
  std::vector<int> trotter_n{1, 2, 4, 8};
  std::filesystem::path out = "mpcc-out";
  std::uint32_t seed = 7;
  /// none | reflection | spin | reflection+spin | auto
  std::string symmetry = "auto";

  /// ValidationError on a missing or doubled system source, weights of the
  /// wrong length and out-of-range numbers.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Structured text: "[table]" headers, "key = value" lines with strings,
/// numbers, booleans or flat arrays, '#' comments. Tables become nested
/// objects. ParseError with the line number on malformed input.
nlohmann::json parse_config_text(std::istream& in);

/// Apply a parsed document on top of cfg. Unknown tables or keys are
/// rejected; a system source in the document replaces the one in cfg.
/// Relative paths resolve against base_dir.
void apply_config(RunConfig& cfg, const nlohmann::json& doc, const std::filesystem::path& base_dir);

RunConfig load_config_file(const std::filesystem::path& path);

/// "0,1,4,5" -> {0, 1, 4, 5}; ValidationError on junk.
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

struct RunReport {
  /// schema, command, config, system, oracle, results, status
  nlohmann::json document;
  /// Wall-clock seconds, kept apart so the document is reproducible.
  nlohmann::json timing;
  /// File name -> CSV text.
  std::map<std::string, std::string> tables;
  /// File name -> amplitude dumps and similar text files.
  std::map<std::string, std::string> files;
  int exit_code = kExitOk;
};

/// Runs a subcommand. Library errors end up in the report status with the
/// matching exit code; the sections filled before the failure are kept.
RunReport run_command(const std::string& command, const RunConfig& cfg);

inline RunReport cmd_fci(const RunConfig& cfg) { return run_command("fci", cfg); }
inline RunReport cmd_ses(const RunConfig& cfg) { return run_command("ses", cfg); }
inline RunReport cmd_multistate(const RunConfig& cfg) { return run_command("multistate", cfg); }
inline RunReport cmd_hermitian(const RunConfig& cfg) { return run_command("hermitian", cfg); }
inline RunReport cmd_symbreak(const RunConfig& cfg) { return run_command("symbreak", cfg); }
inline RunReport cmd_trotter_sweep(const RunConfig& cfg) { return run_command("trotter-sweep", cfg); }

/// report.json, timing.json and the tables under dir (created if needed).
void write_report(const RunReport& report, const std::filesystem::path& dir);

/// Full command line: parse, run, write, print a summary to out and errors
/// to err. Returns the exit code.
int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mpcc::cli
