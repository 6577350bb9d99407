#include "trice/tasks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "trice/errors.hpp"
#include "trice/oracle.hpp"

namespace trice {

int extract_answer(const Rationale& z, const Vocab& vocab) {
  if (z.empty() || !vocab.is_answer(z.last())) return kInvalidAnswer;
  return z.last();
}

double LikelihoodModel::value(int extracted, int y,
                              std::size_t answer_count) const {
  if (kind == Kind::binary) return extracted == y ? 1.0 : 0.0;
  if (extracted == kInvalidAnswer) return 0.0;
  if (extracted == y) return 1.0 - epsilon;
  return epsilon / static_cast<double>(answer_count - 1);
}

void LikelihoodModel::validate(std::size_t answer_count) const {
  if (kind == Kind::smoothed) {
    if (!(epsilon >= 0.0 && epsilon < 1.0))
      throw DomainError("smoothed epsilon must lie in [0,1)");
    if (answer_count < 2)
      throw DomainError("smoothed likelihood needs at least two answers");
  }
}

int TaskSpec::label(std::size_t question) const {
  if (question >= question_count) throw DomainError("question id out of range");
  return labels[question];
}

bool TaskSpec::is_answer_symbol(int symbol) const {
  return std::find(answer_space.begin(), answer_space.end(), symbol) !=
         answer_space.end();
}

std::size_t TaskSpec::answer_index(int y) const {
  for (std::size_t i = 0; i < answer_space.size(); ++i)
    if (answer_space[i] == y) return i;
  throw DomainError("y outside answer space");
}

int TaskSpec::extract(const Rationale& z) const {
  if (z.empty() || !is_answer_symbol(z.last())) return kInvalidAnswer;
  return z.last();
}

void TaskSpec::validate() const {
  if (question_count == 0) throw DomainError("task has no questions");
  if (answer_space.empty()) throw DomainError("answer space is empty");
  std::vector<int> sorted = answer_space;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DomainError("answer space contains duplicates");
  if (labels.size() != question_count)
    throw DomainError("label table size does not match question count");
  for (int y : labels)
    if (!is_answer_symbol(y)) throw DomainError("label outside answer space");
  likelihood.validate(answer_space.size());
}

int correctness(const Rationale& z, int y, const TaskSpec& task) {
  if (!task.is_answer_symbol(y)) throw DomainError("y outside answer space");
  return task.extract(z) == y ? 1 : 0;
}

double likelihood(const Rationale& z, int y, const TaskSpec& task) {
  if (!task.is_answer_symbol(y)) throw DomainError("y outside answer space");
  return task.likelihood.value(task.extract(z), y, task.answer_space.size());
}

Guide::Guide(TabularLM base, TaskSpec task, double mix_lambda,
             std::size_t enum_cap)
    : base_(std::move(base)), task_(std::move(task)), mix_lambda_(mix_lambda) {
  if (!(mix_lambda_ >= 0.0 && mix_lambda_ <= 1.0))
    throw DomainError("mix_lambda must lie in [0,1]");
  task_.validate();
  if (task_.question_count != base_.question_count())
    throw DomainError("guide base model question count mismatch");
  if (base_.sequence_space_size(enum_cap) > enum_cap) return;  // not enumerable
  enumerable_ = true;

  const std::size_t n_answers = task_.answer_space.size();
  tables_.reserve(task_.question_count);
  for (std::size_t x = 0; x < task_.question_count; ++x) {
    EnumerationTable table = enumerate(base_, x, enum_cap);
    PerQuestion pq;
    pq.prior_cdf.resize(table.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      acc += table.probs[i];
      pq.prior_cdf[i] = acc;
    }
    pq.post_cdf.resize(n_answers);
    pq.mode_index.assign(n_answers, 0);
    for (std::size_t ai = 0; ai < n_answers; ++ai) {
      const int y = task_.answer_space[ai];
      Vec cdf(table.size());
      double total = 0.0;
      for (std::size_t i = 0; i < table.size(); ++i) {
        total += table.probs[i] *
                 task_.likelihood.value(task_.extract(table.seqs[i]), y,
                                        n_answers);
        cdf[i] = total;
      }
      if (total > 0.0) pq.post_cdf[ai] = std::move(cdf);
      // Mode of the mixture; with no posterior support the hinted branch
      // falls back to the prior, so the mixture collapses to the prior.
      std::size_t best = 0;
      double best_w = -1.0;
      for (std::size_t i = 0; i < table.size(); ++i) {
        double post = 0.0;
        if (total > 0.0) {
          const double w = table.probs[i] *
                           task_.likelihood.value(
                               task_.extract(table.seqs[i]), y, n_answers);
          post = w / total;
        } else {
          post = table.probs[i];
        }
        const double w = mix_lambda_ * post +
                         (1.0 - mix_lambda_) * table.probs[i];
        if (w > best_w) {
          best_w = w;
          best = i;
        }
      }
      pq.mode_index[ai] = best;
    }
    pq.seqs = std::move(table.seqs);
    tables_.push_back(std::move(pq));
  }
}

std::size_t Guide::answer_index(int y) const {
  return task_.answer_index(y);
}

Rationale Guide::sample(std::size_t question, int y, RngEngine& rng) const {
  if (question >= task_.question_count)
    throw DomainError("question id out of range");
  const std::size_t ai = answer_index(y);
  if (!enumerable_)
    throw CapabilityError(
        "guide base model is not enumerable under the cap; "
        "use a rejection-based guide instead");
  const PerQuestion& pq = tables_[question];
  const bool hinted = canonical_u01(rng) < mix_lambda_;
  const Vec& cdf = (hinted && !pq.post_cdf[ai].empty()) ? pq.post_cdf[ai]
                                                        : pq.prior_cdf;
  const double u = canonical_u01(rng) * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return pq.seqs[static_cast<std::size_t>(it - cdf.begin())];
}

Rationale Guide::mode(std::size_t question, int y) const {
  if (question >= task_.question_count)
    throw DomainError("question id out of range");
  if (!enumerable_)
    throw CapabilityError("guide base model is not enumerable under the cap");
  return tables_[question].seqs[tables_[question].mode_index[answer_index(y)]];
}

Rationale guide_sample(const Guide& guide, std::size_t question, int y,
                       RngEngine& rng) {
  return guide.sample(question, y, rng);
}

namespace {

std::size_t digit_sum(std::size_t x, std::size_t base) {
  std::size_t s = 0;
  while (x > 0) {
    s += x % base;
    x /= base;
  }
  return s;
}

}  // namespace

TaskBundle make_task(const TaskParams& params) {
  if (params.k_total < params.answer_count + 1)
    throw DomainError("k_total must cover EOS plus the answer symbols");
  std::vector<int> answers(params.answer_count);
  for (std::size_t i = 0; i < params.answer_count; ++i)
    answers[i] = static_cast<int>(i + 1);
  Vocab vocab{params.k_total, 0, answers};

  TaskSpec spec;
  spec.name = params.name;
  spec.answer_space = answers;
  spec.likelihood = params.likelihood;

  std::vector<std::size_t> hard;
  if (params.name == "parity" || params.name == "adversarial") {
    if (params.answer_count != 2)
      throw DomainError("parity uses exactly two answer symbols");
    if (params.bits == 0 || params.bits > 20)
      throw DomainError("parity bits must lie in [1,20]");
    spec.question_count = std::size_t{1} << params.bits;
    spec.labels.resize(spec.question_count);
    for (std::size_t x = 0; x < spec.question_count; ++x)
      spec.labels[x] = answers[std::popcount(x) % 2];
  } else if (params.name == "modsum") {
    if (params.question_count == 0)
      throw DomainError("modsum needs a positive question count");
    if (params.modsum_base < 2)
      throw DomainError("modsum base must be at least 2");
    spec.question_count = params.question_count;
    spec.labels.resize(spec.question_count);
    for (std::size_t x = 0; x < spec.question_count; ++x)
      spec.labels[x] =
          answers[digit_sum(x, params.modsum_base) % params.answer_count];
  } else {
    throw DomainError("unknown task name: " + params.name);
  }
  spec.validate();

  TabularLM model(vocab, spec.question_count, params.t_max);
  if (params.init_eos_logit != 0.0)
    for (std::size_t row = 0; row <= model.bos_row(); ++row)
      model.u(row, static_cast<std::size_t>(vocab.eos_id)) =
          params.init_eos_logit;

  if (params.name == "adversarial") {
    if (!(params.hard_fraction >= 0.0 && params.hard_fraction <= 1.0))
      throw DomainError("hard_fraction must lie in [0,1]");
    const auto hard_count = static_cast<std::size_t>(
        params.hard_fraction * static_cast<double>(spec.question_count));
    for (std::size_t x = 0; x < spec.question_count; ++x) {
      const bool is_hard = x < hard_count;
      model.v(x, static_cast<std::size_t>(spec.labels[x])) =
          is_hard ? params.hard_bias : params.easy_boost;
      if (is_hard) hard.push_back(x);
    }
  }
  return {std::move(spec), std::move(model), std::move(hard)};
}

}  // namespace trice
