#pragma once

// Command-line front end: flag/config parsing, subcommand dispatch and
// artifact emission (CSV files, report, manifest).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace parastab {

struct SweepResult;
struct ProbeResult;
struct RateResult;
enum class BoundaryWeighting;

/// CSV text for the fixed output schemas; a header row is always present.
std::string sweep_csv(const SweepResult& sweep, BoundaryWeighting mode, double lambda, double delta1);
/// Rows of all results in order; member_id runs across them.
std::string probe_csv(const std::vector<const ProbeResult*>& results);
std::string rate_csv(const RateResult& rates);

struct RunConfig {
  std::string subcommand;
  std::size_t nx = 64;
  std::size_t nt = 256;
  double T = 1.0;
  double delta0 = 0.5;
  std::optional<double> delta1;  // default min(delta0, T) / 2
  std::string gamma = "both";    // left | right | both
  std::string f = "zero";        // zero | const:c | eigenmode:k | growth:k
  std::string g = "eigenmode:1";  // zero | const:c | eigenmode:k
  double lambda = 1.0;
  std::vector<double> s;  // empty: default sweep
  int p = 0;
  std::string boundary = "exp";
  double C0 = 1.0;
  std::vector<double> noise;
  double alpha0 = 1.0;
  std::uint64_t seed = 0;
  std::string mode = "separable";
  std::size_t max_iters = 500;
  std::size_t repeats = 8;
  double M0 = 100.0;
  std::filesystem::path out;
};

/// args excludes the program name; args[0] is the subcommand.
/// Throws ValidationError on unknown flags or bad values.
RunConfig parse_run_config(std::span<const std::string> args);

/// Flat key=value text of every setting except the output directory;
/// feeding it back through --config reproduces the run.
std::string echo_config(const RunConfig& config);

std::string sha256_hex(std::string_view data);

struct RunReport {
  std::string config_echo;
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, content
  std::vector<std::pair<std::string, std::string>> summary;    // key, value
  std::vector<std::pair<std::string, double>> timings;         // seconds; never written to disk
  int exit_code = 0;
};

/// Validates the configuration, then runs the subcommand.
RunReport execute(const RunConfig& config);

/// Writes config.txt, every artifact, report.txt and manifest.txt into dir.
std::vector<std::filesystem::path> write_report(const RunReport& report, const std::filesystem::path& dir);

/// 0 success, 1 validation or I/O error, 2 estimate-violation candidates.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace parastab
