#ifndef TRICE_CONFIG_HPP
#define TRICE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "trice/optim.hpp"
#include "trice/oracle.hpp"
#include "trice/tasks.hpp"

namespace trice {

enum class EstimatorKind { basic, cv, cv_subsampled, debiased };
enum class MemoryInitMode { guide, prior };
enum class Method { trice, star, rs, rws, direct, cot };

std::string to_string(EstimatorKind kind);
std::string to_string(MemoryInitMode mode);
std::string to_string(Method method);
std::string to_string(OptimizerKind kind);
std::string to_string(ScheduleKind kind);
std::string to_string(LikelihoodModel::Kind kind);
Method method_from_string(const std::string& name);

/// Everything a run needs: the task family, model dimensions, the TRICE
/// loop sizes (T steps, minibatch M, gradient batch L), estimator and
/// likelihood choices, optimizer settings and the mandatory seed.
struct RunConfig {
  TaskParams task;
  std::uint64_t seed = 0;
  std::size_t steps = 1000;     // T
  std::size_t minibatch = 32;   // M
  std::size_t grad_batch = 0;   // L; 0 means "same as minibatch"
  EstimatorKind estimator = EstimatorKind::cv_subsampled;
  double guide_lambda = 0.4;
  MemoryInitMode memory_init = MemoryInitMode::guide;
  OptimizerConfig opt;
  std::size_t sc_samples = 40;  // S
  std::size_t enum_cap = kDefaultEnumCap;
  std::size_t eval_every = 100;
  std::size_t kl_split = 1;
  std::size_t rs_particles = 4;  // K proposals per example
  double rws_guide_lr = 0.0;     // wake-sleep guide lr; 0 means "same as lr"
  std::size_t star_outer = 10;
  std::size_t star_inner0 = 40;
  std::size_t star_inner_cap = 200;
  double star_growth = 1.2;
  double star_break_nll = 0.01;

  std::size_t effective_grad_batch() const {
    return grad_batch == 0 ? minibatch : grad_batch;
  }
  /// Enforces the config-file invariants (M, L, T, S >= 1 and parameter
  /// ranges). Programmatic callers may bypass this; trice_run itself
  /// tolerates the T=0 boundary.
  void validate() const;
};

/// Parse a JSON config file. Unknown keys are rejected, defaults are filled
/// in, and the seed must be present explicitly.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);

/// Canonical (key-sorted, fully materialized) serialization; two configs are
/// equal iff their canonical forms are byte-identical.
nlohmann::json config_to_json(const RunConfig& config);
std::string canonical_config_string(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace trice

#endif  // TRICE_CONFIG_HPP
