#include "trice/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "trice/errors.hpp"

namespace trice {

bool Vocab::is_answer(int symbol) const {
  return std::find(answer_ids.begin(), answer_ids.end(), symbol) !=
         answer_ids.end();
}

void Vocab::validate() const {
  if (size < 2) throw DomainError("vocab needs at least one symbol plus EOS");
  if (eos_id < 0 || static_cast<std::size_t>(eos_id) >= size)
    throw DomainError("eos_id out of range");
  if (answer_ids.empty()) throw DomainError("answer_ids must be non-empty");
  std::vector<int> sorted = answer_ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DomainError("answer_ids contains duplicates");
  for (int a : sorted) {
    if (a < 0 || static_cast<std::size_t>(a) >= size)
      throw DomainError("answer id out of range");
    if (a == eos_id) throw DomainError("EOS cannot be an answer symbol");
  }
}

TabularLM::TabularLM(Vocab vocab, std::size_t question_count,
                     std::size_t t_max)
    : vocab_(std::move(vocab)), question_count_(question_count),
      t_max_(t_max) {
  vocab_.validate();
  if (question_count_ == 0) throw DomainError("need at least one question");
  if (t_max_ == 0) throw DomainError("t_max must be positive");
  params_.assign((vocab_.size + 1) * vocab_.size +
                     question_count_ * vocab_.size,
                 0.0);
}

void TabularLM::set_params(Vec p) {
  if (p.size() != params_.size())
    throw DomainError("parameter vector has wrong dimension");
  params_ = std::move(p);
}

void TabularLM::check_question(std::size_t question) const {
  if (question >= question_count_) throw DomainError("question id out of range");
}

void TabularLM::check_rationale(const Rationale& z) const {
  if (z.size() > t_max_) throw DomainError("rationale longer than t_max");
  if (z.forced_termination && z.size() != t_max_)
    throw DomainError("forced termination only happens at length t_max");
  for (int tok : z.tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_.size)
      throw DomainError("rationale token out of range");
    if (tok == vocab_.eos_id)
      throw DomainError("rationale tokens must not include EOS");
  }
}

void TabularLM::next_log_probs(std::size_t question, std::size_t prev_row,
                               std::span<double> out) const {
  const std::size_t kk = vocab_.size;
  const double* urow = params_.data() + prev_row * kk;
  const double* vrow = params_.data() + (kk + 1) * kk + question * kk;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < kk; ++j) {
    out[j] = urow[j] + vrow[j];
    mx = std::max(mx, out[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < kk; ++j) z += std::exp(out[j] - mx);
  const double lz = mx + std::log(z);
  for (std::size_t j = 0; j < kk; ++j) out[j] -= lz;
}

Rationale TabularLM::sample_rationale(std::size_t question, double temperature,
                                      RngEngine& rng) const {
  check_question(question);
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  const std::size_t kk = vocab_.size;
  std::vector<double> lp(kk);
  Rationale z;
  std::size_t row = bos_row();
  while (z.size() < t_max_) {
    next_log_probs(question, row, lp);
    if (temperature != 1.0) {
      // Re-normalize the tempered distribution.
      double mx = -std::numeric_limits<double>::infinity();
      for (auto& v : lp) {
        v /= temperature;
        mx = std::max(mx, v);
      }
      double zz = 0.0;
      for (double v : lp) zz += std::exp(v - mx);
      const double lz = mx + std::log(zz);
      for (auto& v : lp) v -= lz;
    }
    const double u = canonical_u01(rng);
    double acc = 0.0;
    std::size_t pick = kk - 1;
    for (std::size_t j = 0; j < kk; ++j) {
      acc += std::exp(lp[j]);
      if (u < acc) {
        pick = j;
        break;
      }
    }
    if (static_cast<int>(pick) == vocab_.eos_id) return z;
    z.tokens.push_back(static_cast<int>(pick));
    row = pick;
  }
  z.forced_termination = true;
  return z;
}

double TabularLM::log_prob(std::size_t question, const Rationale& z) const {
  check_question(question);
  check_rationale(z);
  const std::size_t kk = vocab_.size;
  std::vector<double> lp(kk);
  double total = 0.0;
  std::size_t row = bos_row();
  for (int tok : z.tokens) {
    next_log_probs(question, row, lp);
    total += lp[static_cast<std::size_t>(tok)];
    row = static_cast<std::size_t>(tok);
  }
  if (z.size() < t_max_) {
    next_log_probs(question, row, lp);
    total += lp[static_cast<std::size_t>(vocab_.eos_id)];
  }
  return total;
}

void TabularLM::accumulate_grad_log_prob(std::size_t question,
                                         const Rationale& z, double scale,
                                         Vec& out) const {
  check_question(question);
  check_rationale(z);
  if (out.size() != params_.size())
    throw DomainError("gradient accumulator has wrong dimension");
  if (scale == 0.0) return;
  const std::size_t kk = vocab_.size;
  std::vector<double> lp(kk);
  const std::size_t vbase = (kk + 1) * kk + question * kk;
  std::size_t row = bos_row();
  const std::size_t steps = z.size() + (z.size() < t_max_ ? 1 : 0);
  for (std::size_t t = 0; t < steps; ++t) {
    const int tok = t < z.size() ? z.tokens[t] : vocab_.eos_id;
    next_log_probs(question, row, lp);
    double* ubase = out.data() + row * kk;
    for (std::size_t j = 0; j < kk; ++j) {
      const double g = -std::exp(lp[j]);
      ubase[j] += scale * g;
      out[vbase + j] += scale * g;
    }
    ubase[static_cast<std::size_t>(tok)] += scale;
    out[vbase + static_cast<std::size_t>(tok)] += scale;
    row = static_cast<std::size_t>(tok);
  }
}

Vec TabularLM::grad_log_prob(std::size_t question, const Rationale& z) const {
  Vec g(params_.size(), 0.0);
  accumulate_grad_log_prob(question, z, 1.0, g);
  return g;
}

Rationale TabularLM::greedy_decode(std::size_t question) const {
  check_question(question);
  const std::size_t kk = vocab_.size;
  std::vector<double> lp(kk);
  Rationale z;
  std::size_t row = bos_row();
  while (z.size() < t_max_) {
    next_log_probs(question, row, lp);
    std::size_t best = 0;
    for (std::size_t j = 1; j < kk; ++j)
      if (lp[j] > lp[best]) best = j;
    if (static_cast<int>(best) == vocab_.eos_id) return z;
    z.tokens.push_back(static_cast<int>(best));
    row = best;
  }
  z.forced_termination = true;
  return z;
}

std::size_t TabularLM::sequence_space_size(std::size_t saturate_at) const {
  const std::size_t base = vocab_.size - 1;
  std::size_t total = 0;
  std::size_t level = 1;  // (k-1)^0
  for (std::size_t len = 0; len <= t_max_; ++len) {
    if (total > saturate_at - std::min(level, saturate_at)) return saturate_at + 1;
    total += level;
    if (total > saturate_at) return saturate_at + 1;
    if (len < t_max_) {
      if (base != 0 && level > saturate_at / base) return saturate_at + 1;
      level *= base;
    }
  }
  return total;
}

void TabularLM::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["k_total"] = vocab_.size;
  j["eos_id"] = vocab_.eos_id;
  j["answer_ids"] = vocab_.answer_ids;
  j["questions"] = question_count_;
  j["t_max"] = t_max_;
  j["params"] = params_;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open checkpoint for writing: " +
                                  path.string());
  out << j.dump(2) << "\n";
}

TabularLM TabularLM::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    Vocab vocab{j.at("k_total").get<std::size_t>(),
                j.at("eos_id").get<int>(),
                j.at("answer_ids").get<std::vector<int>>()};
    TabularLM model(std::move(vocab), j.at("questions").get<std::size_t>(),
                    j.at("t_max").get<std::size_t>());
    model.set_params(j.at("params").get<Vec>());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() +
                     " missing or mistyped field: " + e.what());
  }
}

}  // namespace trice
