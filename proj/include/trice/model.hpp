#ifndef TRICE_MODEL_HPP
#define TRICE_MODEL_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trice/rng.hpp"
#include "trice/vecmath.hpp"

namespace trice {

/// Token alphabet. Symbol ids are 0..size-1; one id is the terminator (EOS)
/// and a non-empty subset of the remaining ids are designated answer symbols.
struct Vocab {
  std::size_t size = 0;
  int eos_id = 0;
  std::vector<int> answer_ids;

  bool is_answer(int symbol) const;
  /// Throws DomainError if EOS is out of range or listed as an answer, or if
  /// answer_ids is empty, duplicated, or out of range.
  void validate() const;
};

/// A latent token sequence. Tokens never include EOS; forced_termination
/// marks sequences cut off at the model's length cap, which end without an
/// EOS emission.
struct Rationale {
  std::vector<int> tokens;
  bool forced_termination = false;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  int last() const { return tokens.back(); }
  bool operator==(const Rationale&) const = default;
};

/// Enumerable autoregressive sequence model. Next-token logits for question x
/// after symbol `prev` are U[prev] + V[x]; the start-of-sequence context is an
/// extra row of U. Generation stops at EOS or is force-terminated after t_max
/// tokens, which makes the sequence space finite and exactly normalized.
///
/// Parameters are exposed as one flat vector, U rows first then V rows, so
/// optimizers and finite-difference checks can treat the model as a point in
/// R^d.
class TabularLM {
 public:
  TabularLM(Vocab vocab, std::size_t question_count, std::size_t t_max);

  const Vocab& vocab() const { return vocab_; }
  std::size_t question_count() const { return question_count_; }
  std::size_t t_max() const { return t_max_; }

  std::size_t k() const { return vocab_.size; }
  /// Row index of the start-of-sequence context in U.
  std::size_t bos_row() const { return vocab_.size; }

  std::size_t param_count() const { return params_.size(); }
  const Vec& params() const { return params_; }
  Vec& mutable_params() { return params_; }
  void set_params(Vec p);

  std::size_t u_index(std::size_t prev_row, std::size_t next) const {
    return prev_row * vocab_.size + next;
  }
  std::size_t v_index(std::size_t question, std::size_t next) const {
    return (vocab_.size + 1) * vocab_.size + question * vocab_.size + next;
  }
  double& u(std::size_t prev_row, std::size_t next) {
    return params_[u_index(prev_row, next)];
  }
  double& v(std::size_t question, std::size_t next) {
    return params_[v_index(question, next)];
  }

  /// log softmax(U[prev] + V[x]) over all symbols; out.size() == k().
  void next_log_probs(std::size_t question, std::size_t prev_row,
                      std::span<double> out) const;

  Rationale sample_rationale(std::size_t question, double temperature,
                             RngEngine& rng) const;
  double log_prob(std::size_t question, const Rationale& z) const;
  Vec grad_log_prob(std::size_t question, const Rationale& z) const;
  /// out += scale * grad_log_prob(question, z); avoids allocating per call.
  void accumulate_grad_log_prob(std::size_t question, const Rationale& z,
                                double scale, Vec& out) const;
  /// Argmax decode, ties broken by lowest symbol id. Deterministic.
  Rationale greedy_decode(std::size_t question) const;

  /// Number of sequences in the full enumerated space: sum over lengths
  /// 0..t_max of (k-1)^len, saturating at cap+1 to avoid overflow.
  std::size_t sequence_space_size(std::size_t saturate_at) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static TabularLM load_checkpoint(const std::filesystem::path& path);

 private:
  void check_question(std::size_t question) const;
  void check_rationale(const Rationale& z) const;

  Vocab vocab_;
  std::size_t question_count_;
  std::size_t t_max_;
  Vec params_;
};

}  // namespace trice

#endif  // TRICE_MODEL_HPP
