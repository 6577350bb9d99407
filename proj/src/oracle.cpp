#include "trice/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "trice/errors.hpp"

namespace trice {

double EnumerationTable::total_mass() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

std::size_t EnumerationTable::index_of(const Rationale& z) const {
  if (index_.empty() && !seqs.empty())
    for (std::size_t i = 0; i < seqs.size(); ++i) index_[seqs[i].tokens] = i;
  auto it = index_.find(z.tokens);
  return it == index_.end() ? seqs.size() : it->second;
}

EnumerationTable enumerate(const TabularLM& model, std::size_t question,
                           std::size_t cap) {
  if (question >= model.question_count())
    throw DomainError("question id out of range");
  if (model.sequence_space_size(cap) > cap)
    throw CapabilityError("sequence space exceeds enumeration cap");

  const std::size_t kk = model.k();
  const int eos = model.vocab().eos_id;
  EnumerationTable table;
  table.question = question;
  for (int a : model.vocab().answer_ids) table.answer_mass[a] = 0.0;

  // Level-by-level walk of the prefix tree: a prefix of length t contributes
  // one complete sequence (EOS emission, or forced stop at t_max) and, below
  // t_max, one child per non-EOS symbol.
  struct Prefix {
    std::vector<int> tokens;
    double log_prob;
    std::size_t row;  // context row for the next emission
  };
  std::vector<Prefix> level{{{}, 0.0, model.bos_row()}};
  std::vector<double> lp(kk);

  for (std::size_t len = 0; len <= model.t_max(); ++len) {
    std::vector<Prefix> next;
    const bool last_level = len == model.t_max();
    if (!last_level) next.reserve(level.size() * (kk - 1));
    for (const Prefix& pre : level) {
      Rationale z{pre.tokens, last_level};
      double seq_lp = pre.log_prob;
      if (!last_level) {
        model.next_log_probs(question, pre.row, lp);
        seq_lp += lp[static_cast<std::size_t>(eos)];
        for (std::size_t j = 0; j < kk; ++j) {
          if (static_cast<int>(j) == eos) continue;
          std::vector<int> child = pre.tokens;
          child.push_back(static_cast<int>(j));
          next.push_back({std::move(child), pre.log_prob + lp[j], j});
        }
      }
      const double p = std::exp(seq_lp);
      const int ans = extract_answer(z, model.vocab());
      if (ans == kInvalidAnswer)
        table.invalid_mass += p;
      else
        table.answer_mass[ans] += p;
      table.seqs.push_back(std::move(z));
      table.log_probs.push_back(seq_lp);
      table.probs.push_back(p);
    }
    level = std::move(next);
  }
  return table;
}

double exact_marginal(const EnumerationTable& table, const TaskSpec& task,
                      int y) {
  if (!task.is_answer_symbol(y)) throw DomainError("y outside answer space");
  double total = 0.0;
  for (const auto& [answer, mass] : table.answer_mass)
    total += mass * task.likelihood.value(answer, y, task.answer_space.size());
  return total;
}

PosteriorSampler::PosteriorSampler(const EnumerationTable& table,
                                   const TaskSpec& task, int y)
    : table_(&table) {
  if (!task.is_answer_symbol(y)) throw DomainError("y outside answer space");
  cdf_.resize(table.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    acc += table.probs[i] *
           task.likelihood.value(task.extract(table.seqs[i]), y,
                                 task.answer_space.size());
    cdf_[i] = acc;
  }
  marginal_ = acc;
  if (!(marginal_ > 0.0))
    throw NoSupportError("posterior has zero support for this answer");
}

std::size_t PosteriorSampler::sample_index(RngEngine& rng) const {
  const double u = canonical_u01(rng) * marginal_;
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::size_t>(it - cdf_.begin());
}

const Rationale& PosteriorSampler::sample(RngEngine& rng) const {
  return table_->seqs[sample_index(rng)];
}

Rationale exact_posterior_sample(const EnumerationTable& table,
                                 const TaskSpec& task, int y, RngEngine& rng) {
  return PosteriorSampler(table, task, y).sample(rng);
}

Vec exact_gradient(const TabularLM& model, const EnumerationTable& table,
                   const TaskSpec& task, int y) {
  const double marginal = exact_marginal(table, task, y);
  if (!(marginal > 0.0))
    throw NoSupportError("zero marginal: posterior gradient undefined");
  Vec g(model.param_count(), 0.0);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double w = table.probs[i] *
                     task.likelihood.value(task.extract(table.seqs[i]), y,
                                           task.answer_space.size()) /
                     marginal;
    if (w != 0.0)
      model.accumulate_grad_log_prob(table.question, table.seqs[i], w, g);
  }
  return g;
}

double coordinate_score(const TabularLM& model, std::size_t question,
                        const Rationale& z, std::size_t coord) {
  const std::size_t kk = model.k();
  const std::size_t u_size = (kk + 1) * kk;
  std::size_t want_row = 0, want_sym = 0;
  bool is_u = coord < u_size;
  if (is_u) {
    want_row = coord / kk;
    want_sym = coord % kk;
  } else {
    const std::size_t q = (coord - u_size) / kk;
    if (q != question) return 0.0;
    want_sym = (coord - u_size) % kk;
  }
  std::vector<double> lp(kk);
  double score = 0.0;
  std::size_t row = model.bos_row();
  const std::size_t steps = z.size() + (z.size() < model.t_max() ? 1 : 0);
  for (std::size_t t = 0; t < steps; ++t) {
    const int tok =
        t < z.size() ? z.tokens[t] : model.vocab().eos_id;
    if (!is_u || row == want_row) {
      model.next_log_probs(question, row, lp);
      score += (static_cast<std::size_t>(tok) == want_sym ? 1.0 : 0.0) -
               std::exp(lp[want_sym]);
    }
    row = static_cast<std::size_t>(tok);
  }
  return score;
}

EstimatorMoments exact_moments(const TabularLM& model,
                               const EnumerationTable& table,
                               const TaskSpec& task, int y,
                               std::size_t coord) {
  if (task.likelihood.kind != LikelihoodModel::Kind::binary)
    throw DomainError("moments are defined for the binary likelihood");
  if (!task.is_answer_symbol(y)) throw DomainError("y outside answer space");
  if (coord >= model.param_count()) throw DomainError("coordinate out of range");

  double mass_plus = 0.0, mass_minus = 0.0;
  double sum = 0.0, sum_sq = 0.0;
  double sum_plus = 0.0, sum_sq_plus = 0.0;
  double sum_minus = 0.0, sum_sq_minus = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double p = table.probs[i];
    const double s = coordinate_score(model, table.question, table.seqs[i],
                                      coord);
    sum += p * s;
    sum_sq += p * s * s;
    if (task.extract(table.seqs[i]) == y) {
      mass_plus += p;
      sum_plus += p * s;
      sum_sq_plus += p * s * s;
    } else {
      mass_minus += p;
      sum_minus += p * s;
      sum_sq_minus += p * s * s;
    }
  }

  EstimatorMoments m;
  m.pi = mass_plus;
  m.v = sum_sq - sum * sum;
  m.plus_defined = mass_plus > 0.0;
  m.minus_defined = mass_minus > 0.0;
  if (m.plus_defined) {
    m.g_plus = sum_plus / mass_plus;
    m.v_plus = sum_sq_plus / mass_plus - m.g_plus * m.g_plus;
  }
  if (m.minus_defined) {
    m.g_minus = sum_minus / mass_minus;
    m.v_minus = sum_sq_minus / mass_minus - m.g_minus * m.g_minus;
  }
  return m;
}

VarianceReport variance_identities(const TabularLM& model,
                                   const EnumerationTable& table,
                                   const TaskSpec& task, int y,
                                   const EstimatorMoments& moments,
                                   double beta, std::size_t coord) {
  if (!moments.plus_defined || !moments.minus_defined)
    throw UndefinedMomentError("variance identities need pi in (0,1)");
  const double pi = moments.pi, vp = moments.v_plus, v = moments.v;
  VarianceReport r;
  r.var_hat_g = (1.0 - 2.0 * beta * pi) * vp + beta * beta * v;
  r.beta_star = v > 0.0 ? pi * vp / v : 0.0;
  r.v_star = vp * (1.0 - (v > 0.0 ? pi * pi * vp / v : 0.0));
  r.v_pi = (1.0 - 2.0 * pi * pi) * vp + pi * pi * v;
  r.debiased_mean =
      brute_force_pair_stats(model, table, task, y, beta, coord).debiased_mean;
  return r;
}

PairBruteStats brute_force_pair_stats(const TabularLM& model,
                                      const EnumerationTable& table,
                                      const TaskSpec& task, int y, double beta,
                                      std::size_t coord) {
  if (task.likelihood.kind != LikelihoodModel::Kind::binary)
    throw DomainError("pair statistics are defined for the binary likelihood");
  const std::size_t n = table.size();
  std::vector<double> s(n);
  std::vector<char> c(n);
  double pi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = coordinate_score(model, table.question, table.seqs[i], coord);
    c[i] = task.extract(table.seqs[i]) == y ? 1 : 0;
    if (c[i]) pi += table.probs[i];
  }
  if (!(pi > 0.0)) throw NoSupportError("zero marginal: no posterior support");

  PairBruteStats out;
  double mean_ghat = 0.0, mean_sq_ghat = 0.0, mean_cross = 0.0;
  double mean_debiased = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!c[i]) continue;
    const double post_i = table.probs[i] / pi;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = post_i * table.probs[j];
      const double g_prime = c[j] ? s[j] : s[i];
      const double ghat = g_prime - beta * s[j];
      mean_ghat += w * ghat;
      mean_sq_ghat += w * ghat * ghat;
      mean_cross += w * g_prime * s[j];
      mean_debiased += w * (-(1.0 - c[j]) * (s[j] - s[i]));
    }
  }
  out.var_hat_g = mean_sq_ghat - mean_ghat * mean_ghat;
  out.e_gprime_gtilde = mean_cross;
  out.debiased_mean = mean_debiased;

  double mean_inc = 0.0, mean_sq_inc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double e = c[j] ? 0.0 : -s[j] / pi;
    mean_inc += table.probs[j] * e;
    mean_sq_inc += table.probs[j] * e * e;
  }
  out.incorrect_only_var = mean_sq_inc - mean_inc * mean_inc;
  return out;
}

}  // namespace trice
