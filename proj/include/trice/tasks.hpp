#ifndef TRICE_TASKS_HPP
#define TRICE_TASKS_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "trice/model.hpp"
#include "trice/rng.hpp"
#include "trice/vecmath.hpp"

namespace trice {

/// Sentinel for "no parseable answer in this rationale".
inline constexpr int kInvalidAnswer = -1;

/// The final token of z if it is an answer symbol, else kInvalidAnswer.
int extract_answer(const Rationale& z, const Vocab& vocab);

/// p(y|z,x). binary: 1 iff the extracted answer equals y. smoothed: mass
/// (1-epsilon) on the extracted answer, epsilon spread evenly over the other
/// answers; rationales with no valid answer get 0 under both kinds.
struct LikelihoodModel {
  enum class Kind { binary, smoothed };
  Kind kind = Kind::binary;
  double epsilon = 0.0;

  double value(int extracted, int y, std::size_t answer_count) const;
  void validate(std::size_t answer_count) const;
};

/// A synthetic question set: Q questions with ground-truth answer labels
/// drawn from a fixed answer space, plus the outcome likelihood model.
struct TaskSpec {
  std::string name;
  std::size_t question_count = 0;
  std::vector<int> answer_space;
  std::vector<int> labels;  // labels[x] = ground-truth answer symbol y
  LikelihoodModel likelihood;

  int label(std::size_t question) const;
  bool is_answer_symbol(int symbol) const;
  /// Position of y within answer_space; throws DomainError if absent.
  std::size_t answer_index(int y) const;
  /// Final token if it is an answer symbol, else kInvalidAnswer.
  int extract(const Rationale& z) const;
  void validate() const;
};

int correctness(const Rationale& z, int y, const TaskSpec& task);
double likelihood(const Rationale& z, int y, const TaskSpec& task);

/// Hinted proposal distribution q(z|x,y): a mix_lambda-weighted mixture of
/// the base model's exact posterior p(z|x,y) and its prior p(z|x). Holds an
/// immutable snapshot of the base parameters; posterior tables are
/// enumerated once at construction.
class Guide {
 public:
  Guide(TabularLM base, TaskSpec task, double mix_lambda,
        std::size_t enum_cap);

  double mix_lambda() const { return mix_lambda_; }
  const TabularLM& base() const { return base_; }
  const TaskSpec& task() const { return task_; }
  bool enumerable() const { return enumerable_; }

  /// With probability mix_lambda an exact posterior draw (falling back to
  /// the prior when the posterior has no support), otherwise a prior draw.
  Rationale sample(std::size_t question, int y, RngEngine& rng) const;
  /// Deterministic mode of the guide distribution: the sequence maximizing
  /// mix_lambda*posterior(z) + (1-mix_lambda)*prior(z). Ties keep the
  /// earliest sequence in enumeration order.
  Rationale mode(std::size_t question, int y) const;

 private:
  struct PerQuestion {
    std::vector<Rationale> seqs;
    Vec prior_cdf;
    std::vector<Vec> post_cdf;       // per answer index; empty if no support
    std::vector<std::size_t> mode_index;  // per answer index
  };

  std::size_t answer_index(int y) const;

  TabularLM base_;
  TaskSpec task_;
  double mix_lambda_;
  bool enumerable_ = false;
  std::vector<PerQuestion> tables_;
};

Rationale guide_sample(const Guide& guide, std::size_t question, int y,
                       RngEngine& rng);

/// Task factory output: the task plus the initial model it is meant to be
/// trained from (the adversarial task ships a deliberately biased model).
struct TaskBundle {
  TaskSpec spec;
  TabularLM model;
  std::vector<std::size_t> hard_questions;  // adversarial only, else empty
};

struct TaskParams {
  std::string name = "parity";
  std::size_t bits = 4;            // parity/adversarial: Q = 2^bits
  std::size_t question_count = 0;  // modsum; ignored elsewhere
  std::size_t k_total = 8;
  std::size_t t_max = 4;
  std::size_t answer_count = 2;
  std::size_t modsum_base = 10;
  LikelihoodModel likelihood;
  double hard_fraction = 0.5;  // adversarial: leading fraction of questions
  double hard_bias = -6.0;     // initial V[x][y] on the hard subset
  double easy_boost = 2.0;     // initial V[x][y] elsewhere
  double init_eos_logit = 0.0; // initial U[.][eos], shapes initial lengths
};

/// name ∈ {parity, modsum, adversarial}. Vocabulary layout: symbol 0 is EOS,
/// symbols 1..answer_count are the answers, the rest are free tokens.
TaskBundle make_task(const TaskParams& params);

}  // namespace trice

#endif  // TRICE_TASKS_HPP
