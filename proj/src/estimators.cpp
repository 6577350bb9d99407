#include "trice/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "trice/errors.hpp"

namespace trice {

double acceptance_probability(const Rationale& z, const Rationale& z_tilde,
                              int y, const TaskSpec& task) {
  if (task.likelihood.kind == LikelihoodModel::Kind::binary)
    return correctness(z_tilde, y, task) ? 1.0 : 0.0;
  const double num = likelihood(z_tilde, y, task);
  const double den = likelihood(z, y, task);
  if (num == 0.0) return 0.0;  // covers the both-zero convention
  if (den == 0.0) return 1.0;
  return std::min(1.0, num / den);
}

void mcmc_step(BatchState& batch, const TabularLM& model, const TaskSpec& task,
               const RngFactory& rng, std::size_t step) {
  for (std::size_t m = 0; m < batch.size(); ++m) {
    BatchEntry& e = batch.entries[m];
    RngEngine eng = rng.make(kStreamProposal, step, m);
    e.proposal = model.sample_rationale(e.question, 1.0, eng);
    e.proposal_correct = correctness(e.proposal, e.label, task) == 1;
    e.accept_prob = acceptance_probability(e.memory, e.proposal, e.label, task);
    const double u = canonical_u01(eng);
    e.accepted = u < e.accept_prob;
    if (e.accepted) {
      e.memory = e.proposal;
      e.memory_valid = correctness(e.memory, e.label, task) == 1;
    }
  }
}

GradientEstimate basic_gradient_estimate(const BatchState& batch,
                                         const TabularLM& model) {
  GradientEstimate out{Vec(model.param_count(), 0.0), false};
  double denom = 0.0;
  for (const BatchEntry& e : batch.entries)
    if (e.memory_valid) denom += 1.0;
  if (denom == 0.0) {
    out.skipped = true;
    return out;
  }
  for (const BatchEntry& e : batch.entries)
    if (e.memory_valid)
      model.accumulate_grad_log_prob(e.question, e.memory, 1.0 / denom,
                                     out.grad);
  return out;
}

CvScales leave_one_out_beta(const BatchState& batch) {
  double num = 0.0, den = 0.0;
  for (const BatchEntry& e : batch.entries) {
    if (e.memory_valid) {
      den += 1.0;
      if (e.proposal_correct) num += 1.0;
    }
  }
  CvScales scales;
  scales.beta.resize(batch.size());
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const BatchEntry& e = batch.entries[m];
    const double cp = e.memory_valid ? 1.0 : 0.0;
    const double cc = (e.memory_valid && e.proposal_correct) ? 1.0 : 0.0;
    const double d = den - cp;
    scales.beta[m] = d > 0.0 ? (num - cc) / d : 0.0;
  }
  return scales;
}

CvScales generalized_beta(const BatchState& batch) {
  double total = 0.0;
  for (const BatchEntry& e : batch.entries) total += e.accept_prob;
  CvScales scales;
  scales.beta.resize(batch.size());
  const std::size_t m_count = batch.size();
  for (std::size_t m = 0; m < m_count; ++m)
    scales.beta[m] =
        m_count > 1
            ? (total - batch.entries[m].accept_prob) /
                  static_cast<double>(m_count - 1)
            : 0.0;
  return scales;
}

GradientEstimate control_variate_gradient_estimate(const BatchState& batch,
                                                   const TabularLM& model,
                                                   const CvScales& scales) {
  if (scales.beta.size() != batch.size())
    throw DomainError("scale vector size does not match batch");
  GradientEstimate out{Vec(model.param_count(), 0.0), false};
  double denom = 0.0;
  for (const BatchEntry& e : batch.entries)
    if (e.memory_valid) denom += 1.0;
  if (denom == 0.0) {
    out.skipped = true;
    return out;
  }
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const BatchEntry& e = batch.entries[m];
    if (!e.memory_valid) continue;
    model.accumulate_grad_log_prob(e.question, e.memory, 1.0 / denom,
                                   out.grad);
    if (scales.beta[m] != 0.0)
      model.accumulate_grad_log_prob(e.question, e.proposal,
                                     -scales.beta[m] / denom, out.grad);
  }
  return out;
}

SubsampleWeights build_subsample_weights(const BatchState& batch,
                                         const CvScales& scales) {
  if (scales.beta.size() != batch.size())
    throw DomainError("scale vector size does not match batch");
  SubsampleWeights w;
  w.w.assign(2 * batch.size(), 0.0);
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const BatchEntry& e = batch.entries[m];
    if (!e.memory_valid) continue;
    const double ct = e.proposal_correct ? 1.0 : 0.0;
    w.w[m] = 1.0 - ct * scales.beta[m];
    w.w[batch.size() + m] = (1.0 - ct) * scales.beta[m];
  }
  return w;
}

ResampleResult systematic_resample_at(const SubsampleWeights& weights,
                                      std::size_t L, double u0) {
  if (L < 1) throw DomainError("L must be at least 1");
  double total = 0.0;
  std::size_t last_positive = weights.w.size();
  for (std::size_t i = 0; i < weights.w.size(); ++i) {
    if (weights.w[i] < 0.0) throw DomainError("negative subsample weight");
    if (weights.w[i] > 0.0) last_positive = i;
    total += weights.w[i];
  }
  if (!(total > 0.0)) throw NoSupportError("all subsample weights are zero");
  if (!(u0 >= 0.0 && u0 < 1.0 / static_cast<double>(L)))
    throw DomainError("u0 must lie in [0, 1/L)");

  ResampleResult result;
  result.total_weight = total;
  result.picks.reserve(L);
  const auto sign_of = [&](std::size_t i) {
    return i < weights.half() ? 1 : -1;
  };
  double cum = 0.0;
  std::size_t l = 0;
  for (std::size_t i = 0; i < weights.w.size() && l < L; ++i) {
    cum += weights.w[i] / total;
    while (l < L &&
           u0 + static_cast<double>(l) / static_cast<double>(L) < cum) {
      result.picks.emplace_back(i, sign_of(i));
      ++l;
    }
  }
  // Rounding at the top of the CDF can leave grid points unassigned; they
  // belong to the last interval with mass.
  while (l < L) {
    result.picks.emplace_back(last_positive, sign_of(last_positive));
    ++l;
  }
  return result;
}

ResampleResult systematic_resample(const SubsampleWeights& weights,
                                   std::size_t L, RngEngine& rng) {
  const double u0 = canonical_u01(rng) / static_cast<double>(L);
  return systematic_resample_at(weights, L, u0);
}

GradientEstimate subsampled_cv_gradient_estimate_at(const BatchState& batch,
                                                    const TabularLM& model,
                                                    const CvScales& scales,
                                                    std::size_t L, double u0) {
  GradientEstimate out{Vec(model.param_count(), 0.0), false};
  double denom = 0.0;
  for (const BatchEntry& e : batch.entries)
    if (e.memory_valid) denom += 1.0;
  const SubsampleWeights weights = build_subsample_weights(batch, scales);
  double total = 0.0;
  for (double w : weights.w) total += w;
  if (denom == 0.0 || !(total > 0.0)) {
    out.skipped = true;
    return out;
  }
  const ResampleResult picks = systematic_resample_at(weights, L, u0);
  const double scale = picks.total_weight /
                       (denom * static_cast<double>(L));
  for (const auto& [index, sign] : picks.picks) {
    const BatchEntry& e = batch.entries[index % batch.size()];
    const Rationale& z = index < batch.size() ? e.memory : e.proposal;
    model.accumulate_grad_log_prob(e.question, z, sign * scale, out.grad);
  }
  return out;
}

GradientEstimate subsampled_cv_gradient_estimate(const BatchState& batch,
                                                 const TabularLM& model,
                                                 const CvScales& scales,
                                                 std::size_t L,
                                                 RngEngine& rng) {
  const double u0 = canonical_u01(rng) / static_cast<double>(L);
  return subsampled_cv_gradient_estimate_at(batch, model, scales, L, u0);
}

GradientEstimate debiased_incorrect_estimate(const BatchState& batch,
                                             const TabularLM& model) {
  GradientEstimate out{Vec(model.param_count(), 0.0), false};
  double denom = 0.0;
  for (const BatchEntry& e : batch.entries)
    if (e.memory_valid) denom += 1.0;
  if (denom == 0.0) {
    out.skipped = true;
    return out;
  }
  for (const BatchEntry& e : batch.entries) {
    if (!e.memory_valid || e.proposal_correct) continue;
    model.accumulate_grad_log_prob(e.question, e.proposal, -1.0 / denom,
                                   out.grad);
    model.accumulate_grad_log_prob(e.question, e.memory, 1.0 / denom,
                                   out.grad);
  }
  return out;
}

}  // namespace trice
