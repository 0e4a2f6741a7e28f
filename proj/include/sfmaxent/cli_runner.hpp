#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sfmaxent/maxent_models.hpp"
#include "sfmaxent/walker_dynamics.hpp"

namespace sfmaxent {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3, kExitNumerical = 4 };

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; `#` starts a comment, blank lines are ignored.
KeyValues parse_config(std::istream& in);
KeyValues load_config(const std::filesystem::path& path);

/// A fully resolved simulate invocation. `resolved` holds every parameter
/// (defaults included) in the form written to the manifest.
struct SimulationPlan {
  std::string mode;  // free | bounded | zipf
  SimConfig config;
  std::uint64_t n_steps = 0;
  std::uint64_t snapshot_every = 0;
  std::size_t hist_bins = 0;  // 0 = Freedman-Diaconis
  KeyValues resolved;
};

/// Mode defaults overridden by `settings`. Unknown keys are a ConfigError.
SimulationPlan plan_simulation(std::string_view mode, const KeyValues& settings,
                               std::uint64_t default_seed = 1);

/// Runs the plan, writes snapshots, histograms, rank-size and figure CSVs
/// plus manifest.json into out_dir, and returns the manifest.
nlohmann::json cmd_simulate(const SimulationPlan& plan, const std::filesystem::path& out_dir);

struct SolveOptions {
  std::optional<double> u_max;
  std::optional<double> mean_u;
  bool normalized = false;
  double x0 = 1.0;
};

/// Solved model JSON with multipliers and residuals.
nlohmann::json cmd_solve(const SolveOptions& opts);

struct AnalyzeOptions {
  std::filesystem::path data;             // "-" reads stdin
  std::optional<std::filesystem::path> schema;  // absent: long format
  std::vector<std::string> models{"benford", "lognormal", "zipf"};
  std::size_t top_n = 150;
  std::vector<int> years;                 // empty: all years in the data
  std::optional<std::filesystem::path> include;  // place ids, one per line
  bool linear_fit_space = false;
};

/// Report JSON; writes rank-size CSVs (and report/manifest) when out_dir is
/// given. Statistics that the data cannot support are "unavailable".
nlohmann::json cmd_analyze(const AnalyzeOptions& opts, std::istream& stdin_stream,
                           const std::optional<std::filesystem::path>& out_dir);

struct FixtureOptions {
  std::string model = "zipf";  // zipf | benford | lognormal | power_law
  double lambda = 1.0;
  double u_max = 4.0 * 2.302585092994046;
  double mean_u = 5.0;
  double var_u = 2.0;
  double x0 = 1000.0;
  std::size_t n = 1000;
  std::vector<int> years{1990, 2000};
  double K = 0.01;
  std::uint64_t seed = 1;
};

/// "3" means three decades from 1990; "1990,2000" lists years.
std::vector<int> parse_years(std::string_view text);

FixtureOptions plan_fixture(const KeyValues& settings, std::uint64_t default_seed = 1);
KeyValues fixture_settings(const FixtureOptions& opts);
EquilibriumModel fixture_model(const FixtureOptions& opts);

/// Writes fixture.csv and manifest.json into out_dir; returns the manifest.
nlohmann::json cmd_fixture(const FixtureOptions& opts, const std::filesystem::path& out_dir);

/// Re-executes a simulate or fixture manifest into out_dir (default: the
/// manifest's directory).
nlohmann::json replay_manifest(const std::filesystem::path& manifest,
                               const std::optional<std::filesystem::path>& out_dir);

/// Full command line entry point; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace sfmaxent
