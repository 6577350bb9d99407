#include "trice/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "trice/errors.hpp"

namespace trice {

double greedy_accuracy(const TabularLM& model, const TaskSpec& task) {
  std::size_t hits = 0;
  for (std::size_t x = 0; x < task.question_count; ++x)
    if (task.extract(model.greedy_decode(x)) == task.label(x)) ++hits;
  return static_cast<double>(hits) /
         static_cast<double>(task.question_count);
}

double exact_mean_marginal_ll(const TabularLM& model, const TaskSpec& task,
                              std::size_t enum_cap) {
  double total = 0.0;
  for (std::size_t x = 0; x < task.question_count; ++x) {
    const EnumerationTable table = enumerate(model, x, enum_cap);
    total += std::log(exact_marginal(table, task, task.label(x)));
  }
  return total / static_cast<double>(task.question_count);
}

int self_consistency(const TabularLM& model, const TaskSpec& task,
                     std::size_t question, std::size_t samples,
                     RngEngine& rng) {
  if (samples < 1) throw DomainError("need at least one sample");
  std::map<int, std::size_t> counts;
  for (std::size_t s = 0; s < samples; ++s) {
    const int ans = task.extract(model.sample_rationale(question, 1.0, rng));
    if (ans != kInvalidAnswer) ++counts[ans];
  }
  std::vector<int> ordered = task.answer_space;
  std::sort(ordered.begin(), ordered.end());
  int best = ordered.front();
  std::size_t best_count = 0;
  for (int a : ordered) {
    const auto it = counts.find(a);
    const std::size_t c = it == counts.end() ? 0 : it->second;
    if (c > best_count) {
      best = a;
      best_count = c;
    }
  }
  return best;
}

double self_consistency_accuracy(const TabularLM& model, const TaskSpec& task,
                                 std::size_t samples, const RngFactory& rng,
                                 std::size_t step) {
  std::size_t hits = 0;
  for (std::size_t x = 0; x < task.question_count; ++x) {
    RngEngine eng = rng.make(kStreamEval, step, x);
    if (self_consistency(model, task, x, samples, eng) == task.label(x))
      ++hits;
  }
  return static_cast<double>(hits) /
         static_cast<double>(task.question_count);
}

KlDiagnostics kl_diagnostics(const TabularLM& guide_model,
                             const TabularLM& prior_model,
                             const TaskSpec& task, std::size_t split,
                             std::size_t enum_cap) {
  if (guide_model.vocab().size != prior_model.vocab().size ||
      guide_model.t_max() != prior_model.t_max())
    throw DomainError("guide and prior models span different sequence spaces");
  const std::size_t n_answers = task.answer_space.size();
  if (guide_model.question_count() != task.question_count * n_answers)
    throw DomainError("guide model must be indexed by (question, answer) pairs");
  if (prior_model.question_count() != task.question_count)
    throw DomainError("prior model question count does not match the task");

  KlDiagnostics out;
  for (std::size_t x = 0; x < task.question_count; ++x) {
    const std::size_t pair =
        x * n_answers + task.answer_index(task.label(x));
    const EnumerationTable qe = enumerate(guide_model, pair, enum_cap);
    const EnumerationTable pe = enumerate(prior_model, x, enum_cap);

    // Tables enumerate the shared space in the same order, so rows align.
    double full = 0.0;
    for (std::size_t i = 0; i < qe.size(); ++i)
      if (qe.probs[i] > 0.0)
        full += qe.probs[i] * (qe.log_probs[i] - pe.log_probs[i]);

    // Partition cells: short sequences stand alone, longer ones group by
    // their first `split` tokens.
    std::vector<std::size_t> cell_of(qe.size());
    std::vector<std::vector<int>> keys;
    std::map<std::vector<int>, std::size_t> key_index;
    for (std::size_t i = 0; i < qe.size(); ++i) {
      std::vector<int> key;
      if (qe.seqs[i].size() < split) {
        key = qe.seqs[i].tokens;
        key.push_back(-1);  // marker: terminated before the split
      } else {
        key.assign(qe.seqs[i].tokens.begin(),
                   qe.seqs[i].tokens.begin() + static_cast<long>(split));
      }
      auto [it, inserted] = key_index.try_emplace(key, keys.size());
      if (inserted) keys.push_back(key);
      cell_of[i] = it->second;
    }
    Vec q_cell(keys.size(), 0.0), p_cell(keys.size(), 0.0);
    for (std::size_t i = 0; i < qe.size(); ++i) {
      q_cell[cell_of[i]] += qe.probs[i];
      p_cell[cell_of[i]] += pe.probs[i];
    }

    double prefix = 0.0;
    for (std::size_t c = 0; c < keys.size(); ++c)
      if (q_cell[c] > 0.0)
        prefix += q_cell[c] * (std::log(q_cell[c]) - std::log(p_cell[c]));

    double suffix = 0.0;
    for (std::size_t i = 0; i < qe.size(); ++i) {
      const std::size_t c = cell_of[i];
      if (qe.probs[i] > 0.0)
        suffix += qe.probs[i] * (qe.log_probs[i] - pe.log_probs[i] -
                                 std::log(q_cell[c]) + std::log(p_cell[c]));
    }

    out.kl_full += full;
    out.kl_prefix += prefix;
    out.kl_suffix_conditional += suffix;
  }
  const double nq = static_cast<double>(task.question_count);
  out.kl_full /= nq;
  out.kl_prefix /= nq;
  out.kl_suffix_conditional /= nq;
  return out;
}

}  // namespace trice
