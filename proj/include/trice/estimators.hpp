#ifndef TRICE_ESTIMATORS_HPP
#define TRICE_ESTIMATORS_HPP

#include <cstddef>
#include <utility>
#include <vector>

#include "trice/model.hpp"
#include "trice/rng.hpp"
#include "trice/tasks.hpp"
#include "trice/vecmath.hpp"

namespace trice {

/// One minibatch example: its chain-memory rationale (validity c'), the
/// fresh proposal (correctness c̃) and the acceptance probability α of the
/// last MCMC step.
struct BatchEntry {
  std::size_t question = 0;
  int label = 0;
  Rationale memory;
  bool memory_valid = false;   // c'
  Rationale proposal;
  bool proposal_correct = false;  // c̃
  double accept_prob = 0.0;       // α
  bool accepted = false;          // outcome of the last mcmc_step
};

struct BatchState {
  std::vector<BatchEntry> entries;
  std::size_t size() const { return entries.size(); }
};

/// Per-example control-variate scales; β_m depends only on entries m' ≠ m.
struct CvScales {
  Vec beta;
};

/// The 2M unnormalized subsampling weights of the subsampled estimator:
/// index m < M carries sign +1 and the memory rationale, index M+m carries
/// sign -1 and the (incorrect) proposal.
struct SubsampleWeights {
  Vec w;
  std::size_t half() const { return w.size() / 2; }
};

struct GradientEstimate {
  Vec grad;
  bool skipped = false;
};

struct ResampleResult {
  std::vector<std::pair<std::size_t, int>> picks;  // (index, sign)
  double total_weight = 0.0;
};

/// Independence-sampler acceptance probability. Binary likelihood: accept
/// iff the proposal is correct (both-incorrect is rejected by convention).
/// General likelihood: min{1, p(y|z̃,x)/p(y|z,x)}, 0 when both vanish.
double acceptance_probability(const Rationale& z, const Rationale& z_tilde,
                              int y, const TaskSpec& task);

/// One independence-sampler step per entry: draw z̃ ~ p_θ(z|x) at temperature
/// 1, accept with acceptance_probability, update memory and flags. Each
/// entry uses its own (step, position) substream.
void mcmc_step(BatchState& batch, const TabularLM& model, const TaskSpec& task,
               const RngFactory& rng, std::size_t step);

/// (1/Σc')·Σ_m c'_m ∇log p(z_m|x); Σc' = 0 yields a skipped zero estimate.
GradientEstimate basic_gradient_estimate(const BatchState& batch,
                                         const TabularLM& model);

/// β_m = Σ_{m'≠m} c'c̃ / Σ_{m'≠m} c', with 0 on an empty denominator.
CvScales leave_one_out_beta(const BatchState& batch);

/// General-likelihood variant: β_m = mean of the other entries' α.
CvScales generalized_beta(const BatchState& batch);

/// (1/Σc')·Σ_m c'_m (∇log p(z_m|x) − β_m ∇log p(z̃_m|x)).
GradientEstimate control_variate_gradient_estimate(const BatchState& batch,
                                                   const TabularLM& model,
                                                   const CvScales& scales);

SubsampleWeights build_subsample_weights(const BatchState& batch,
                                         const CvScales& scales);

/// Stratified selection of L slots with a single shared u₀ ~ U[0, 1/L);
/// expected count of index i is L·w_i/W. Indices may repeat.
ResampleResult systematic_resample(const SubsampleWeights& weights,
                                   std::size_t L, RngEngine& rng);
ResampleResult systematic_resample_at(const SubsampleWeights& weights,
                                      std::size_t L, double u0);

/// (W/Σc')·(1/L)·Σ_ℓ s_ℓ ∇log p(ẑ_ℓ|x) over the resampled slots; the _at
/// variant fixes u₀ for exhaustive stratum enumeration.
GradientEstimate subsampled_cv_gradient_estimate(const BatchState& batch,
                                                 const TabularLM& model,
                                                 const CvScales& scales,
                                                 std::size_t L,
                                                 RngEngine& rng);
GradientEstimate subsampled_cv_gradient_estimate_at(const BatchState& batch,
                                                    const TabularLM& model,
                                                    const CvScales& scales,
                                                    std::size_t L, double u0);

/// Average over valid-memory entries of −(1−c̃)(∇log p(z̃|x) − ∇log p(z|x));
/// an unbiased estimate of g₊ built from rejected proposals.
GradientEstimate debiased_incorrect_estimate(const BatchState& batch,
                                             const TabularLM& model);

}  // namespace trice

#endif  // TRICE_ESTIMATORS_HPP
