#ifndef TRICE_ORACLE_HPP
#define TRICE_ORACLE_HPP

#include <cstddef>
#include <map>
#include <vector>

#include "trice/model.hpp"
#include "trice/rng.hpp"
#include "trice/tasks.hpp"
#include "trice/vecmath.hpp"

namespace trice {

inline constexpr std::size_t kDefaultEnumCap = 1'000'000;

/// Complete enumeration of the rationale space for one (model, question):
/// every sequence with its exact log-probability, in length-major order
/// (empty sequence first, then length-1 sequences by ascending symbol, ...).
struct EnumerationTable {
  std::size_t question = 0;
  std::vector<Rationale> seqs;
  Vec log_probs;
  Vec probs;
  /// Probability mass per answer symbol (binary-correctness partition) and
  /// the mass on rationales with no extractable answer.
  std::map<int, double> answer_mass;
  double invalid_mass = 0.0;

  std::size_t size() const { return seqs.size(); }
  double total_mass() const;
  /// Row index of z, or size() if z is not in the table. The reverse index
  /// is built on first use; tables are otherwise immutable.
  std::size_t index_of(const Rationale& z) const;

 private:
  mutable std::map<std::vector<int>, std::size_t> index_;
};

/// Throws CapabilityError when the sequence space exceeds cap.
EnumerationTable enumerate(const TabularLM& model, std::size_t question,
                           std::size_t cap = kDefaultEnumCap);

/// p(y|x) = Σ_z p(z|x)·p(y|z,x) under the task's likelihood model.
double exact_marginal(const EnumerationTable& table, const TaskSpec& task,
                      int y);

/// Reusable exact posterior sampler over the table (CDF + binary search).
/// Throws NoSupportError when the marginal is zero.
class PosteriorSampler {
 public:
  PosteriorSampler(const EnumerationTable& table, const TaskSpec& task,
                   int y);
  const Rationale& sample(RngEngine& rng) const;
  std::size_t sample_index(RngEngine& rng) const;
  double marginal() const { return marginal_; }

 private:
  const EnumerationTable* table_;
  Vec cdf_;
  double marginal_;
};

Rationale exact_posterior_sample(const EnumerationTable& table,
                                 const TaskSpec& task, int y, RngEngine& rng);

/// Exact posterior-mean score Σ_z p(z|x,y)·∇log p(z|x); the gradient of
/// log p(y|x) in θ.
Vec exact_gradient(const TabularLM& model, const EnumerationTable& table,
                   const TaskSpec& task, int y);

/// ∇log p(z|x) restricted to one parameter coordinate, without materializing
/// the full gradient vector.
double coordinate_score(const TabularLM& model, std::size_t question,
                        const Rationale& z, std::size_t coord);

/// Scalar moments of the single-coordinate score under the binary
/// correctness partition: pi = p(y|x), g±/v± the mean and variance of the
/// score conditioned on correct/incorrect rationales, v the unconditional
/// second moment statistics over the prior.
struct EstimatorMoments {
  double pi = 0.0;
  double g_plus = 0.0, g_minus = 0.0;
  double v = 0.0, v_plus = 0.0, v_minus = 0.0;
  bool plus_defined = false, minus_defined = false;
};

/// Requires the task's binary likelihood. pi ∈ {0,1} flags the empty branch
/// undefined instead of erroring.
EstimatorMoments exact_moments(const TabularLM& model,
                               const EnumerationTable& table,
                               const TaskSpec& task, int y, std::size_t coord);

/// Closed-form single-example estimator identities at control-variate scale
/// beta, plus the debiased incorrect-rationale mean evaluated by direct
/// enumeration over (z ~ posterior, z̃ ~ prior) pairs.
struct VarianceReport {
  double var_hat_g = 0.0;   // (1-2βπ)v₊ + β²v
  double beta_star = 0.0;   // πv₊/v
  double v_star = 0.0;      // v₊(1 - π²v₊/v)
  double v_pi = 0.0;        // var_hat_g at β=π
  double debiased_mean = 0.0;  // E[-(1-c̃)(g̃-g)], brute pair enumeration
};

/// Throws UndefinedMomentError unless pi ∈ (0,1).
VarianceReport variance_identities(const TabularLM& model,
                                   const EnumerationTable& table,
                                   const TaskSpec& task, int y,
                                   const EstimatorMoments& moments,
                                   double beta, std::size_t coord);

/// Brute-force statistics over the product measure posterior(z) × prior(z̃),
/// evaluated by an explicit double loop with no moment algebra. This is the
/// independent route the closed forms are checked against.
struct PairBruteStats {
  double var_hat_g = 0.0;        // Var of g(z') - β·g(z̃), z' the updated memory
  double e_gprime_gtilde = 0.0;  // E[g(z')·g(z̃)]
  double incorrect_only_var = 0.0;  // Var of -((1-c̃)/π)·g(z̃)
  double debiased_mean = 0.0;       // E[-(1-c̃)·(g(z̃)-g(z))]
};

PairBruteStats brute_force_pair_stats(const TabularLM& model,
                                      const EnumerationTable& table,
                                      const TaskSpec& task, int y, double beta,
                                      std::size_t coord);

}  // namespace trice

#endif  // TRICE_ORACLE_HPP
