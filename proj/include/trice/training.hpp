#ifndef TRICE_TRAINING_HPP
#define TRICE_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "trice/config.hpp"
#include "trice/model.hpp"
#include "trice/rng.hpp"
#include "trice/tasks.hpp"

namespace trice {

/// Per-example persistent chain state. `valid` records whether the example
/// ever held a correct rationale; under the binary likelihood this is
/// monotone and coincides with current correctness.
struct ChainEntry {
  Rationale z;
  bool valid = false;
  std::size_t last_update_step = 0;
};

using ChainMemory = std::vector<ChainEntry>;

/// One per-step metrics row. Evaluation fields are populated only on
/// eval-cadence steps (has_eval); exact_mean_marginal_ll is NaN when the
/// sequence space exceeds the enumeration cap. mean_len is the mean memory
/// rationale length for trice/star/direct/cot, the mean proposal length for
/// rs, and the importance-weighted sample length for rws.
struct MetricsRow {
  std::size_t step = 0;
  double accept_rate = 0.0;
  double valid_memory_fraction = 0.0;
  double mean_beta = 0.0;
  double grad_norm = 0.0;
  double mean_len = 0.0;
  bool skipped = false;
  bool has_eval = false;
  double exact_mean_marginal_ll = 0.0;
  double greedy_acc = 0.0;
  double sc_acc = 0.0;
};

struct TrainResult {
  TabularLM model;
  ChainMemory memory;
  std::vector<MetricsRow> metrics;
  std::optional<TabularLM> rws_guide;  // populated by rws_run only
};

/// Cyclic minibatch scheduler over shuffled epochs. The permutation is
/// redrawn from the (shuffle, epoch) substream at each wrap, so a batch that
/// spans an epoch boundary mixes the tail of one permutation with the head
/// of the next.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t question_count, std::size_t batch_size,
                const RngFactory& rng);

  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t n_;
  std::size_t batch_;
  const RngFactory* rng_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

/// Fresh chain memory: one entry per question, drawn from the guide or the
/// model prior per config.memory_init, valid flags set by correctness.
/// `guide` may be null in prior mode.
ChainMemory init_memory(const RunConfig& config, const TabularLM& model,
                        const TaskSpec& task, const Guide* guide,
                        const RngFactory& rng);

/// The main MCMC-EM loop: per step, one independence-sampler sweep over the
/// minibatch followed by one update of the configured gradient estimator.
TrainResult trice_run(const RunConfig& config, const TabularLM& model,
                      const TaskSpec& task);

/// Baseline: K = rs_particles fresh proposals per example on a minibatch of
/// M/K examples (matching trice's per-step proposal budget), gradients
/// averaged over correct proposals per example, then across examples.
TrainResult rejection_sampling_run(const RunConfig& config,
                                   const TabularLM& model,
                                   const TaskSpec& task);

/// Baseline: outer loops rebuild the rationale set by greedy decoding
/// (falling back to the guide mode), then retrain from the initial
/// parameters on the kept set. Deterministic given the config.
TrainResult star_run(const RunConfig& config, const TabularLM& model,
                     const TaskSpec& task);

/// Baseline: reweighted wake-sleep with a separate (question, answer)-pair
/// indexed guide; one example per step, M guide samples, self-normalized
/// importance weights c·p/q.
TrainResult rws_run(const RunConfig& config, const TabularLM& model,
                    const TaskSpec& task);

/// Baselines: direct answer tuning (references are the length-1 rationale
/// (y)) and supervised CoT tuning on frozen guide-mode references.
TrainResult supervised_run(const RunConfig& config, const TabularLM& model,
                           const TaskSpec& task, Method mode);

TrainResult run_method(const RunConfig& config, const TabularLM& model,
                       const TaskSpec& task, Method method);

}  // namespace trice

#endif  // TRICE_TRAINING_HPP
