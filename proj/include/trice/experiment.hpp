#ifndef TRICE_EXPERIMENT_HPP
#define TRICE_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "trice/config.hpp"
#include "trice/estimators.hpp"
#include "trice/training.hpp"

namespace trice {

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config_json;
  std::filesystem::path metrics_csv;
  std::filesystem::path memory_csv;
  std::filesystem::path model_json;
  std::filesystem::path guide_json;  // rws only
  std::filesystem::path summary_json;
};

/// Trains `method` under `config` and persists the run into run_dir:
/// canonical config.json, metrics.csv, memory.csv, the model checkpoint
/// (plus guide.json for rws) and summary.json. Refuses an existing
/// non-empty directory unless `overwrite`; rs budget mismatches are
/// rejected before any work.
RunPaths run_experiment(const RunConfig& config, Method method,
                        const std::filesystem::path& run_dir, bool overwrite);

/// Deterministic CSV serializations (%.17g floats, empty cells for absent
/// evaluation fields).
std::string metrics_csv_string(const std::vector<MetricsRow>& rows);
std::string memory_csv_string(const ChainMemory& memory);

/// Self-consistency evaluation key used for summary.json and the standalone
/// eval subcommand; training steps start at 1, so this never collides with
/// an in-run evaluation stream.
inline constexpr std::size_t kFinalEvalStep = 0;

struct IdentityCheckRow {
  std::string config_name;
  std::size_t question = 0;
  std::size_t coordinate = 0;
  std::string check;
  double beta = 0.0;  // NaN when the check has no beta
  double formula = 0.0;
  double brute = 0.0;
  double abs_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct IdentitySuiteResult {
  std::vector<IdentityCheckRow> rows;
  double slope = 0.0;  // near-optimality log-log fit over the pi family
  bool all_pass = false;
};

using BetaFn = std::function<CvScales(const BatchState&)>;

/// Options for the exact-identity suite. beta_fn is injectable so a
/// deliberately faulty scale rule can prove the independence check bites;
/// null means leave_one_out_beta.
struct IdentitySuiteOptions {
  std::uint64_t seed = 7;
  std::size_t families = 3;
  std::size_t coords_per_family = 4;
  bool include_slope_family = true;
  BetaFn beta_fn;
};

/// Runs every closed-form-vs-enumeration identity over a seeded family of
/// random 4-symbol models plus the near-optimality slope construction.
IdentitySuiteResult run_identity_suite(const IdentitySuiteOptions& options);

std::string identity_suite_csv(const IdentitySuiteResult& result);

/// One point of the slope family: a two-route single-question model whose
/// marginal correct-answer probability is bisected to target_pi while the
/// first-emission score variance stays bounded away from zero (so the
/// |v_pi - v_star| gap decays at the O((1-pi)^2) rate rather than
/// collapsing with v).
struct SlopeFamilyPoint {
  TabularLM model;
  TaskSpec task;
  double pi = 0.0;
  std::size_t coordinate = 0;
};

SlopeFamilyPoint slope_family_point(double target_pi);

}  // namespace trice

#endif  // TRICE_EXPERIMENT_HPP
