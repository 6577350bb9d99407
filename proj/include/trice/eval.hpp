#ifndef TRICE_EVAL_HPP
#define TRICE_EVAL_HPP

#include <cstddef>

#include "trice/model.hpp"
#include "trice/oracle.hpp"
#include "trice/rng.hpp"
#include "trice/tasks.hpp"

namespace trice {

/// Fraction of questions whose greedy decode extracts the gold answer.
double greedy_accuracy(const TabularLM& model, const TaskSpec& task);

/// (1/Q)·Σ_x log p(y_x|x) by exact enumeration. Throws CapabilityError when
/// the sequence space exceeds enum_cap.
double exact_mean_marginal_ll(const TabularLM& model, const TaskSpec& task,
                              std::size_t enum_cap = kDefaultEnumCap);

/// Majority answer among S temperature-1 samples, INVALID extractions
/// excluded; ties and all-INVALID resolve to the lowest answer symbol id.
int self_consistency(const TabularLM& model, const TaskSpec& task,
                     std::size_t question, std::size_t samples,
                     RngEngine& rng);

/// Self-consistency accuracy over all questions, each on its own
/// (step, question) substream so evaluation never perturbs training streams.
double self_consistency_accuracy(const TabularLM& model, const TaskSpec& task,
                                 std::size_t samples, const RngFactory& rng,
                                 std::size_t step);

/// Exact KL diagnostics between a pair-indexed guide model q(z|x,y) and a
/// question-indexed prior model p(z|x), averaged over questions at their
/// gold answers. The sequence space is split at position `split`: sequences
/// shorter than the split are their own outcome, all others group by their
/// first `split` tokens.
struct KlDiagnostics {
  double kl_prefix = 0.0;
  double kl_suffix_conditional = 0.0;
  double kl_full = 0.0;  // independent full-sequence sum for chain-rule checks
};

KlDiagnostics kl_diagnostics(const TabularLM& guide_model,
                             const TabularLM& prior_model,
                             const TaskSpec& task, std::size_t split,
                             std::size_t enum_cap = kDefaultEnumCap);

}  // namespace trice

#endif  // TRICE_EVAL_HPP
