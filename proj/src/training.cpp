#include "trice/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "trice/errors.hpp"
#include "trice/estimators.hpp"
#include "trice/eval.hpp"
#include "trice/optim.hpp"
#include "trice/oracle.hpp"
#include "trice/stats.hpp"
#include "trice/vecmath.hpp"

namespace trice {

namespace {

// Explicit Fisher-Yates so shuffles do not depend on the standard library's
// unspecified std::shuffle/uniform_int_distribution algorithms.
std::vector<std::size_t> shuffled_ids(std::size_t n, RngEngine& eng) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(canonical_u01(eng) *
                                      static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

bool space_enumerable(const TabularLM& model, std::size_t cap) {
  return model.sequence_space_size(cap) <= cap;
}

// Populates the eval fields on cadence steps and on the final step.
void maybe_eval(MetricsRow& row, std::size_t step, std::size_t final_step,
                const RunConfig& config, const TabularLM& model,
                const TaskSpec& task, const RngFactory& rng,
                bool enumerable) {
  if (step % config.eval_every != 0 && step != final_step) return;
  row.has_eval = true;
  row.exact_mean_marginal_ll =
      enumerable ? exact_mean_marginal_ll(model, task, config.enum_cap)
                 : std::numeric_limits<double>::quiet_NaN();
  row.greedy_acc = greedy_accuracy(model, task);
  row.sc_acc =
      self_consistency_accuracy(model, task, config.sc_samples, rng, step);
}

void memory_stats(const ChainMemory& memory, MetricsRow& row) {
  std::size_t valid = 0;
  double len_sum = 0.0;
  for (const ChainEntry& e : memory) {
    valid += e.valid ? 1 : 0;
    len_sum += static_cast<double>(e.z.size());
  }
  const auto n = static_cast<double>(memory.size());
  row.valid_memory_fraction = static_cast<double>(valid) / n;
  row.mean_len = len_sum / n;
}

}  // namespace

BatchSchedule::BatchSchedule(std::size_t question_count,
                             std::size_t batch_size, const RngFactory& rng)
    : n_(question_count), batch_(batch_size), rng_(&rng) {
  if (n_ == 0) throw DomainError("schedule needs at least one question");
  if (batch_ == 0) throw DomainError("schedule needs a positive batch size");
  reshuffle();
}

void BatchSchedule::reshuffle() {
  RngEngine eng = rng_->make(kStreamShuffle, epoch_);
  order_ = shuffled_ids(n_, eng);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSchedule::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  while (out.size() < batch_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

ChainMemory init_memory(const RunConfig& config, const TabularLM& model,
                        const TaskSpec& task, const Guide* guide,
                        const RngFactory& rng) {
  if (config.memory_init == MemoryInitMode::guide && guide == nullptr)
    throw DomainError("guide-mode memory init needs a guide");
  ChainMemory memory(task.question_count);
  for (std::size_t n = 0; n < task.question_count; ++n) {
    RngEngine eng = rng.make(kStreamMemoryInit, 0, n);
    const int y = task.label(n);
    ChainEntry& e = memory[n];
    e.z = config.memory_init == MemoryInitMode::guide
              ? guide->sample(n, y, eng)
              : model.sample_rationale(n, 1.0, eng);
    e.valid = correctness(e.z, y, task) == 1;
    e.last_update_step = 0;
  }
  return memory;
}

TrainResult trice_run(const RunConfig& config, const TabularLM& init_model,
                      const TaskSpec& task) {
  TrainResult out{init_model, {}, {}, std::nullopt};
  TabularLM& model = out.model;
  const RngFactory rng(config.seed);
  const bool enumerable = space_enumerable(model, config.enum_cap);

  std::optional<Guide> guide;
  if (config.memory_init == MemoryInitMode::guide)
    guide.emplace(model, task, config.guide_lambda, config.enum_cap);
  out.memory = init_memory(config, model, task, guide ? &*guide : nullptr, rng);

  Optimizer opt(config.opt, model.param_count());
  BatchSchedule schedule(task.question_count, config.minibatch, rng);
  const std::size_t subsample_l = config.effective_grad_batch();

  for (std::size_t t = 1; t <= config.steps; ++t) {
    const std::vector<std::size_t> ids = schedule.next();
    BatchState batch;
    batch.entries.reserve(ids.size());
    for (std::size_t id : ids) {
      BatchEntry e;
      e.question = id;
      e.label = task.label(id);
      e.memory = out.memory[id].z;
      e.memory_valid = correctness(e.memory, e.label, task) == 1;
      batch.entries.push_back(std::move(e));
    }

    mcmc_step(batch, model, task, rng, t);

    MetricsRow row;
    row.step = t;
    double accepted = 0.0;
    for (const BatchEntry& e : batch.entries) {
      accepted += e.accepted ? 1.0 : 0.0;
      if (e.accepted) {
        ChainEntry& slot = out.memory[e.question];
        slot.z = e.memory;
        slot.valid = slot.valid || e.memory_valid;
        slot.last_update_step = t;
      }
    }
    row.accept_rate = accepted / static_cast<double>(batch.size());

    GradientEstimate estimate;
    CvScales scales;
    switch (config.estimator) {
      case EstimatorKind::basic:
        estimate = basic_gradient_estimate(batch, model);
        break;
      case EstimatorKind::cv:
        scales = leave_one_out_beta(batch);
        estimate = control_variate_gradient_estimate(batch, model, scales);
        break;
      case EstimatorKind::cv_subsampled: {
        scales = leave_one_out_beta(batch);
        RngEngine eng = rng.make(kStreamSubsample, t);
        estimate = subsampled_cv_gradient_estimate(batch, model, scales,
                                                   subsample_l, eng);
        break;
      }
      case EstimatorKind::debiased:
        estimate = debiased_incorrect_estimate(batch, model);
        break;
    }
    if (!scales.beta.empty()) row.mean_beta = mean_of(scales.beta);
    row.skipped = estimate.skipped;
    if (!estimate.skipped) {
      row.grad_norm = l2_norm(estimate.grad);
      opt.ascend(model.mutable_params(), estimate.grad);
    }

    memory_stats(out.memory, row);
    maybe_eval(row, t, config.steps, config, model, task, rng, enumerable);
    out.metrics.push_back(row);
  }
  return out;
}

TrainResult rejection_sampling_run(const RunConfig& config,
                                   const TabularLM& init_model,
                                   const TaskSpec& task) {
  const std::size_t k_particles = config.rs_particles;
  if (k_particles == 0) throw DomainError("rs_particles must be at least 1");
  if (config.minibatch % k_particles != 0)
    throw DomainError("rs_particles must divide minibatch");

  TrainResult out{init_model, {}, {}, std::nullopt};
  TabularLM& model = out.model;
  const RngFactory rng(config.seed);
  const bool enumerable = space_enumerable(model, config.enum_cap);
  const std::size_t examples = config.minibatch / k_particles;

  out.memory.assign(task.question_count, ChainEntry{});
  Optimizer opt(config.opt, model.param_count());
  BatchSchedule schedule(task.question_count, examples, rng);
  Vec grad(model.param_count());
  Vec per_example(model.param_count());

  for (std::size_t t = 1; t <= config.steps; ++t) {
    const std::vector<std::size_t> ids = schedule.next();
    std::fill(grad.begin(), grad.end(), 0.0);
    std::size_t contributing = 0;
    std::size_t correct_total = 0;
    double len_sum = 0.0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const std::size_t id = ids[j];
      const int y = task.label(id);
      RngEngine eng = rng.make(kStreamProposal, t, j);
      std::fill(per_example.begin(), per_example.end(), 0.0);
      std::size_t correct = 0;
      for (std::size_t k = 0; k < k_particles; ++k) {
        Rationale z = model.sample_rationale(id, 1.0, eng);
        len_sum += static_cast<double>(z.size());
        if (correctness(z, y, task) == 1) {
          ++correct;
          model.accumulate_grad_log_prob(id, z, 1.0, per_example);
          ChainEntry& slot = out.memory[id];
          slot.z = std::move(z);
          slot.valid = true;
          slot.last_update_step = t;
        }
      }
      correct_total += correct;
      if (correct > 0) {
        ++contributing;
        axpy(1.0 / static_cast<double>(correct), per_example, grad);
      }
    }

    MetricsRow row;
    row.step = t;
    const auto proposals =
        static_cast<double>(ids.size() * k_particles);
    row.accept_rate = static_cast<double>(correct_total) / proposals;
    if (contributing == 0) {
      row.skipped = true;
    } else {
      scale(grad, 1.0 / static_cast<double>(contributing));
      row.grad_norm = l2_norm(grad);
      opt.ascend(model.mutable_params(), grad);
    }
    memory_stats(out.memory, row);
    row.mean_len = len_sum / proposals;  // proposal lengths, not memory
    maybe_eval(row, t, config.steps, config, model, task, rng, enumerable);
    out.metrics.push_back(row);
  }
  return out;
}

namespace {

struct StarRef {
  Rationale z;
  bool kept = false;
  bool from_model = false;
};

std::size_t star_inner_steps(const RunConfig& config, std::size_t outer) {
  const double raw = static_cast<double>(config.star_inner0) *
                     std::pow(config.star_growth,
                              static_cast<double>(outer - 1));
  const auto grown = static_cast<std::size_t>(std::floor(raw));
  return std::min(config.star_inner_cap, std::max<std::size_t>(1, grown));
}

std::vector<StarRef> star_rebuild(const TabularLM& model, const Guide& guide,
                                  const TaskSpec& task) {
  std::vector<StarRef> refs(task.question_count);
  for (std::size_t x = 0; x < task.question_count; ++x) {
    const int y = task.label(x);
    Rationale z = model.greedy_decode(x);
    if (correctness(z, y, task) == 1) {
      refs[x] = {std::move(z), true, true};
      continue;
    }
    Rationale hinted = guide.mode(x, y);
    if (correctness(hinted, y, task) == 1)
      refs[x] = {std::move(hinted), true, false};
  }
  return refs;
}

}  // namespace

TrainResult star_run(const RunConfig& config, const TabularLM& init_model,
                     const TaskSpec& task) {
  TrainResult out{init_model, {}, {}, std::nullopt};
  TabularLM& model = out.model;
  const Vec theta0 = init_model.params();
  const RngFactory rng(config.seed);  // evaluation substreams only
  const bool enumerable = space_enumerable(model, config.enum_cap);
  const Guide guide(init_model, task, config.guide_lambda, config.enum_cap);
  const auto n = static_cast<double>(task.question_count);

  std::size_t global_step = 0;
  Vec grad(model.param_count());
  for (std::size_t outer = 1; outer <= config.star_outer; ++outer) {
    const std::vector<StarRef> refs = star_rebuild(model, guide, task);
    std::size_t kept = 0, from_model = 0;
    double len_sum = 0.0;
    for (const StarRef& r : refs) {
      if (!r.kept) continue;
      ++kept;
      from_model += r.from_model ? 1 : 0;
      len_sum += static_cast<double>(r.z.size());
    }

    model.set_params(theta0);  // retune from scratch each outer loop
    Optimizer opt(config.opt, model.param_count());

    if (kept == 0) {
      ++global_step;
      MetricsRow row;
      row.step = global_step;
      row.skipped = true;
      maybe_eval(row, global_step, 0, config, model, task, rng, enumerable);
      out.metrics.push_back(row);
      continue;
    }

    const std::size_t inner = star_inner_steps(config, outer);
    for (std::size_t i = 1; i <= inner; ++i) {
      ++global_step;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t x = 0; x < task.question_count; ++x)
        if (refs[x].kept)
          model.accumulate_grad_log_prob(x, refs[x].z, 1.0, grad);
      opt.ascend(model.mutable_params(), grad);

      double nll = 0.0;
      for (std::size_t x = 0; x < task.question_count; ++x)
        if (refs[x].kept) nll -= model.log_prob(x, refs[x].z);
      nll /= static_cast<double>(kept);

      MetricsRow row;
      row.step = global_step;
      row.accept_rate = static_cast<double>(from_model) / n;
      row.valid_memory_fraction = static_cast<double>(kept) / n;
      row.mean_len = len_sum / static_cast<double>(kept);
      row.grad_norm = l2_norm(grad);
      maybe_eval(row, global_step, 0, config, model, task, rng, enumerable);
      out.metrics.push_back(row);
      if (nll < config.star_break_nll) break;
    }
  }

  // The returned memory is the rationale set the final model would train on.
  const std::vector<StarRef> final_refs = star_rebuild(model, guide, task);
  out.memory.assign(task.question_count, ChainEntry{});
  for (std::size_t x = 0; x < task.question_count; ++x)
    if (final_refs[x].kept)
      out.memory[x] = {final_refs[x].z, true, global_step};
  return out;
}

TrainResult rws_run(const RunConfig& config, const TabularLM& init_model,
                    const TaskSpec& task) {
  TrainResult out{init_model, {}, {}, std::nullopt};
  TabularLM& model = out.model;
  const RngFactory rng(config.seed);
  const bool enumerable = space_enumerable(model, config.enum_cap);
  const std::size_t answers = task.answer_space.size();

  // Pair-indexed guide q(z|x,y): question slot x*A + answer_index(y),
  // initialized so q(.|x,y) = p0(.|x) for every answer.
  TabularLM q(model.vocab(), task.question_count * answers, model.t_max());
  {
    Vec qp = q.params();
    const std::size_t u_block = (model.k() + 1) * model.k();
    for (std::size_t i = 0; i < u_block; ++i) qp[i] = init_model.params()[i];
    for (std::size_t x = 0; x < task.question_count; ++x)
      for (std::size_t a = 0; a < answers; ++a)
        for (std::size_t j = 0; j < model.k(); ++j)
          qp[q.v_index(x * answers + a, j)] =
              init_model.params()[init_model.v_index(x, j)];
    q.set_params(std::move(qp));
  }

  out.memory.assign(task.question_count, ChainEntry{});
  Optimizer opt_theta(config.opt, model.param_count());
  OptimizerConfig phi_opt = config.opt;
  if (config.rws_guide_lr > 0.0) phi_opt.lr = config.rws_guide_lr;
  Optimizer opt_phi(phi_opt, q.param_count());
  BatchSchedule schedule(task.question_count, 1, rng);
  const std::size_t samples = config.minibatch;

  Vec grad_theta(model.param_count());
  Vec grad_phi(q.param_count());

  for (std::size_t t = 1; t <= config.steps; ++t) {
    const std::size_t id = schedule.next().front();
    const int y = task.label(id);
    const std::size_t pair = id * answers + task.answer_index(y);
    RngEngine eng = rng.make(kStreamProposal, t, 0);

    std::vector<Rationale> zs(samples);
    Vec weights(samples);
    double total = 0.0;
    std::size_t correct_total = 0;
    double len_sum = 0.0;
    for (std::size_t m = 0; m < samples; ++m) {
      zs[m] = q.sample_rationale(pair, 1.0, eng);
      len_sum += static_cast<double>(zs[m].size());
      const double c = likelihood(zs[m], y, task);
      weights[m] =
          c == 0.0
              ? 0.0
              : c * std::exp(model.log_prob(id, zs[m]) - q.log_prob(pair, zs[m]));
      total += weights[m];
      if (correctness(zs[m], y, task) == 1) {
        ++correct_total;
        ChainEntry& slot = out.memory[id];
        slot.z = zs[m];
        slot.valid = true;
        slot.last_update_step = t;
      }
    }

    MetricsRow row;
    row.step = t;
    row.accept_rate =
        static_cast<double>(correct_total) / static_cast<double>(samples);
    if (total == 0.0) {
      row.skipped = true;
      row.mean_len = len_sum / static_cast<double>(samples);
    } else {
      std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
      std::fill(grad_phi.begin(), grad_phi.end(), 0.0);
      double weighted_len = 0.0;
      for (std::size_t m = 0; m < samples; ++m) {
        if (weights[m] == 0.0) continue;
        const double w = weights[m] / total;
        model.accumulate_grad_log_prob(id, zs[m], w, grad_theta);
        q.accumulate_grad_log_prob(pair, zs[m], w, grad_phi);
        weighted_len += w * static_cast<double>(zs[m].size());
      }
      row.mean_len = weighted_len;
      row.grad_norm = l2_norm(grad_theta);
      opt_theta.ascend(model.mutable_params(), grad_theta);
      opt_phi.ascend(q.mutable_params(), grad_phi);
    }

    std::size_t valid = 0;
    for (const ChainEntry& e : out.memory) valid += e.valid ? 1 : 0;
    row.valid_memory_fraction =
        static_cast<double>(valid) / static_cast<double>(out.memory.size());
    maybe_eval(row, t, config.steps, config, model, task, rng, enumerable);
    out.metrics.push_back(row);
  }
  out.rws_guide = std::move(q);
  return out;
}

TrainResult supervised_run(const RunConfig& config,
                           const TabularLM& init_model, const TaskSpec& task,
                           Method mode) {
  if (mode != Method::direct && mode != Method::cot)
    throw DomainError("supervised_run handles direct and cot only");

  TrainResult out{init_model, {}, {}, std::nullopt};
  TabularLM& model = out.model;
  const RngFactory rng(config.seed);
  const bool enumerable = space_enumerable(model, config.enum_cap);

  std::vector<Rationale> refs(task.question_count);
  if (mode == Method::direct) {
    for (std::size_t x = 0; x < task.question_count; ++x)
      refs[x] = Rationale{{task.label(x)}, false};
  } else {
    const Guide guide(init_model, task, config.guide_lambda, config.enum_cap);
    for (std::size_t x = 0; x < task.question_count; ++x)
      refs[x] = guide.mode(x, task.label(x));
  }

  double correct_refs = 0.0, len_sum = 0.0;
  for (std::size_t x = 0; x < task.question_count; ++x) {
    correct_refs += correctness(refs[x], task.label(x), task) == 1 ? 1.0 : 0.0;
    len_sum += static_cast<double>(refs[x].size());
  }
  const auto n = static_cast<double>(task.question_count);

  Optimizer opt(config.opt, model.param_count());
  Vec grad(model.param_count());
  for (std::size_t t = 1; t <= config.steps; ++t) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t x = 0; x < task.question_count; ++x)
      model.accumulate_grad_log_prob(x, refs[x], 1.0 / n, grad);
    opt.ascend(model.mutable_params(), grad);

    MetricsRow row;
    row.step = t;
    row.accept_rate = correct_refs / n;
    row.valid_memory_fraction = correct_refs / n;
    row.mean_len = len_sum / n;
    row.grad_norm = l2_norm(grad);
    maybe_eval(row, t, config.steps, config, model, task, rng, enumerable);
    out.metrics.push_back(row);
  }

  out.memory.assign(task.question_count, ChainEntry{});
  for (std::size_t x = 0; x < task.question_count; ++x)
    out.memory[x] = {refs[x],
                     correctness(refs[x], task.label(x), task) == 1, 0};
  return out;
}

TrainResult run_method(const RunConfig& config, const TabularLM& model,
                       const TaskSpec& task, Method method) {
  switch (method) {
    case Method::trice:
      return trice_run(config, model, task);
    case Method::star:
      return star_run(config, model, task);
    case Method::rs:
      return rejection_sampling_run(config, model, task);
    case Method::rws:
      return rws_run(config, model, task);
    case Method::direct:
    case Method::cot:
      return supervised_run(config, model, task, method);
  }
  throw DomainError("unknown training method");
}

}  // namespace trice
