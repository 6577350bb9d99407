#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "trice/config.hpp"
#include "trice/errors.hpp"
#include "trice/eval.hpp"
#include "trice/oracle.hpp"
#include "trice/rng.hpp"
#include "trice/tasks.hpp"
#include "trice/training.hpp"

using namespace trice;
using namespace trice::test;

namespace {

RunConfig small_parity_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 3;
  cfg.task.k_total = 6;
  cfg.task.t_max = 3;
  cfg.seed = seed;
  cfg.steps = 60;
  cfg.minibatch = 8;
  cfg.eval_every = 20;
  cfg.opt.lr = 0.05;
  return cfg;
}

double reference_nll(const TrainResult& result, const TaskSpec& task) {
  double nll = 0.0;
  for (std::size_t x = 0; x < task.question_count; ++x)
    nll -= result.model.log_prob(x, result.memory[x].z);
  return nll / static_cast<double>(task.question_count);
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("batch schedule walks shuffled epochs") {
  const RngFactory rng(5);
  BatchSchedule schedule(7, 3, rng);

  std::vector<std::size_t> ids;
  for (int b = 0; b < 7; ++b) {
    const std::vector<std::size_t> batch = schedule.next();
    REQUIRE(batch.size() == 3);
    ids.insert(ids.end(), batch.begin(), batch.end());
  }
  REQUIRE(ids.size() == 21);
  // Each aligned window of 7 draws is a permutation of 0..6.
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<std::size_t> window(ids.begin() + epoch * 7,
                                    ids.begin() + (epoch + 1) * 7);
    std::sort(window.begin(), window.end());
    for (std::size_t i = 0; i < 7; ++i) CHECK(window[i] == i);
  }

  // Same factory, same sequence.
  BatchSchedule again(7, 3, rng);
  for (int b = 0; b < 7; ++b)
    CHECK(again.next() ==
          std::vector<std::size_t>(ids.begin() + b * 3,
                                   ids.begin() + (b + 1) * 3));

  // Batches larger than the question set span epochs.
  BatchSchedule wide(3, 5, rng);
  const std::vector<std::size_t> batch = wide.next();
  REQUIRE(batch.size() == 5);
  std::vector<std::size_t> head(batch.begin(), batch.begin() + 3);
  std::sort(head.begin(), head.end());
  CHECK(head == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("guide-initialized memory at lambda=1 is the posterior mode draw") {
  const TabularLM model = uniform_model(3, 1, 4, {1, 2});
  const TaskSpec task = make_binary_task(4, {1, 2}, {1, 2, 1, 2});
  const Guide guide(model, task, 1.0, kDefaultEnumCap);

  RunConfig cfg;
  cfg.seed = 3;
  cfg.memory_init = MemoryInitMode::guide;
  const ChainMemory memory =
      init_memory(cfg, model, task, &guide, RngFactory(cfg.seed));

  REQUIRE(memory.size() == 4);
  for (std::size_t x = 0; x < 4; ++x) {
    // t_max=1: the only correct rationale is the bare answer.
    CHECK(memory[x].z == Rationale{{task.label(x)}, true});
    CHECK(memory[x].valid);
    CHECK(memory[x].last_update_step == 0);
  }

  CHECK_THROWS_AS(init_memory(cfg, model, task, nullptr, RngFactory(3)),
                  DomainError);
}

TEST_CASE("prior-initialized memory flags validity by correctness") {
  RngEngine eng(41);
  const TabularLM model = random_model(3, 2, 16, {1, 2}, eng);
  std::vector<int> labels;
  for (int x = 0; x < 16; ++x) labels.push_back(1 + x % 2);
  const TaskSpec task = make_binary_task(16, {1, 2}, labels);

  RunConfig cfg;
  cfg.seed = 11;
  cfg.memory_init = MemoryInitMode::prior;
  const ChainMemory memory =
      init_memory(cfg, model, task, nullptr, RngFactory(cfg.seed));
  const ChainMemory again =
      init_memory(cfg, model, task, nullptr, RngFactory(cfg.seed));

  REQUIRE(memory.size() == 16);
  for (std::size_t x = 0; x < 16; ++x) {
    CHECK(memory[x].valid ==
          (correctness(memory[x].z, task.label(x), task) == 1));
    CHECK(memory[x].z == again[x].z);  // deterministic in the factory
  }
}

TEST_CASE("trice_run with zero steps leaves the model untouched") {
  RunConfig cfg = small_parity_config(7);
  cfg.steps = 0;
  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult result = trice_run(cfg, bundle.model, bundle.spec);
  CHECK(result.metrics.empty());
  CHECK(result.model.params() == bundle.model.params());
  CHECK(result.memory.size() == bundle.spec.question_count);
  CHECK_FALSE(result.rws_guide.has_value());
}

TEST_CASE("trice_run is deterministic and logs on the eval cadence") {
  const RunConfig cfg = small_parity_config(7);
  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult a = trice_run(cfg, bundle.model, bundle.spec);
  const TrainResult b = trice_run(cfg, bundle.model, bundle.spec);

  REQUIRE(a.metrics.size() == 60);
  CHECK(a.model.params() == b.model.params());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    const MetricsRow& ra = a.metrics[i];
    const MetricsRow& rb = b.metrics[i];
    CHECK(ra.step == i + 1);
    CHECK(ra.accept_rate == rb.accept_rate);
    CHECK(ra.grad_norm == rb.grad_norm);
    CHECK(ra.mean_beta == rb.mean_beta);
    CHECK(ra.has_eval == (ra.step % 20 == 0));
    if (ra.has_eval) {
      CHECK(std::isfinite(ra.exact_mean_marginal_ll));
      CHECK(ra.exact_mean_marginal_ll == rb.exact_mean_marginal_ll);
      CHECK(ra.sc_acc == rb.sc_acc);
    }
  }

  // Binary correctness makes memory validity monotone.
  for (std::size_t i = 1; i < a.metrics.size(); ++i)
    CHECK(a.metrics[i].valid_memory_fraction >=
          a.metrics[i - 1].valid_memory_fraction);
  for (std::size_t x = 0; x < a.memory.size(); ++x)
    if (a.memory[x].valid)
      CHECK(correctness(a.memory[x].z, bundle.spec.label(x), bundle.spec) ==
            1);
}

TEST_CASE("estimator variants all drive the trice loop") {
  for (EstimatorKind kind :
       {EstimatorKind::basic, EstimatorKind::cv, EstimatorKind::cv_subsampled,
        EstimatorKind::debiased}) {
    RunConfig cfg = small_parity_config(13);
    cfg.steps = 30;
    cfg.estimator = kind;
    const TaskBundle bundle = make_task(cfg.task);
    const TrainResult result = trice_run(cfg, bundle.model, bundle.spec);
    CHECK(result.metrics.size() == 30);
    for (const MetricsRow& row : result.metrics)
      if (!row.skipped) CHECK(std::isfinite(row.grad_norm));
  }
}

TEST_CASE("frozen-model accept rate matches the mean marginal") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 19;
  cfg.steps = 300;
  cfg.minibatch = 16;
  cfg.estimator = EstimatorKind::basic;
  cfg.opt.lr = 1e-12;  // effectively frozen
  cfg.eval_every = 1000;

  const TaskBundle bundle = make_task(cfg.task);
  double mean_marginal = 0.0;
  for (std::size_t x = 0; x < bundle.spec.question_count; ++x)
    mean_marginal += exact_marginal(enumerate(bundle.model, x), bundle.spec,
                                    bundle.spec.label(x));
  mean_marginal /= static_cast<double>(bundle.spec.question_count);

  const TrainResult result = trice_run(cfg, bundle.model, bundle.spec);
  double mean_accept = 0.0;
  for (const MetricsRow& row : result.metrics) mean_accept += row.accept_rate;
  mean_accept /= static_cast<double>(result.metrics.size());

  // 4800 proposals; a 4-sigma band around the exact proposal-correct rate.
  const double sigma =
      std::sqrt(mean_marginal * (1.0 - mean_marginal) / 4800.0);
  CHECK(std::abs(mean_accept - mean_marginal) < 4.0 * sigma + 1e-9);
}

TEST_CASE("rejection sampling validates the particle budget") {
  RunConfig cfg = small_parity_config(3);
  cfg.minibatch = 6;
  cfg.rs_particles = 4;
  const TaskBundle bundle = make_task(cfg.task);
  CHECK_THROWS_AS(rejection_sampling_run(cfg, bundle.model, bundle.spec),
                  DomainError);
}

TEST_CASE("rejection sampling tracks proposals, not memory, in mean_len") {
  RunConfig cfg = small_parity_config(23);
  cfg.steps = 40;
  cfg.minibatch = 8;
  cfg.rs_particles = 4;
  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult result =
      rejection_sampling_run(cfg, bundle.model, bundle.spec);
  REQUIRE(result.metrics.size() == 40);
  for (const MetricsRow& row : result.metrics) {
    CHECK(row.accept_rate >= 0.0);
    CHECK(row.accept_rate <= 1.0);
    CHECK(row.mean_len >= 0.0);
    CHECK(row.mean_len <= 3.0);
  }
  for (std::size_t x = 0; x < result.memory.size(); ++x)
    if (result.memory[x].valid)
      CHECK(correctness(result.memory[x].z, bundle.spec.label(x),
                        bundle.spec) == 1);
}

TEST_CASE("star runs the published inner-step schedule") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 29;
  cfg.guide_lambda = 0.8;  // mode = the bare answer rationale
  cfg.opt.lr = 1e-12;      // near-frozen; ties still break toward (y)
  cfg.star_break_nll = 1e-12;  // unreachable
  cfg.eval_every = 100000;

  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult result = star_run(cfg, bundle.model, bundle.spec);

  // floor(40 * 1.2^(o-1)) capped at 200:
  // 40+48+57+69+82+99+119+143+171+200 = 1028.
  CHECK(result.metrics.size() == 1028);
  for (const MetricsRow& row : result.metrics) {
    CHECK_FALSE(row.skipped);
    CHECK(row.valid_memory_fraction == 1.0);  // every question rationalized
    // Outer loop 1 rebuilds from the tie-broken zero init (greedy decodes
    // the empty rationale, so every keep comes from the guide). Later
    // rebuilds see the tuned parameters, whose infinitesimal Adam updates
    // already tilt greedy decoding onto (y).
    CHECK(row.accept_rate == (row.step <= 40 ? 0.0 : 1.0));
    CHECK(row.mean_len == 1.0);  // the (y) rationale either way
  }
  for (std::size_t x = 0; x < result.memory.size(); ++x) {
    CHECK(result.memory[x].valid);
    CHECK(result.memory[x].z ==
          Rationale{{bundle.spec.label(x)}, false});
  }

  // Determinism: STaR has no sampling anywhere.
  const TrainResult again = star_run(cfg, bundle.model, bundle.spec);
  CHECK(again.metrics.size() == result.metrics.size());
  CHECK(again.model.params() == result.model.params());
}

TEST_CASE("star stops an outer loop once the NLL target is hit") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 29;
  cfg.guide_lambda = 0.8;
  cfg.opt.lr = 1e-12;
  cfg.star_break_nll = 10.0;  // initial NLL ~ log 16, already below target
  cfg.eval_every = 100000;

  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult result = star_run(cfg, bundle.model, bundle.spec);
  CHECK(result.metrics.size() == cfg.star_outer);  // one step per outer loop
}

TEST_CASE("rws trains a pair-indexed guide and keeps correct memories") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 31;
  cfg.steps = 50;
  cfg.minibatch = 8;
  cfg.opt.lr = 0.05;
  cfg.eval_every = 25;

  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult result = rws_run(cfg, bundle.model, bundle.spec);
  REQUIRE(result.metrics.size() == 50);
  REQUIRE(result.rws_guide.has_value());
  CHECK(result.rws_guide->question_count() ==
        bundle.spec.question_count * bundle.spec.answer_space.size());
  CHECK(result.rws_guide->k() == bundle.model.k());
  for (std::size_t x = 0; x < result.memory.size(); ++x)
    if (result.memory[x].valid)
      CHECK(correctness(result.memory[x].z, bundle.spec.label(x),
                        bundle.spec) == 1);

  const TrainResult again = rws_run(cfg, bundle.model, bundle.spec);
  CHECK(again.model.params() == result.model.params());
  CHECK(again.rws_guide->params() == result.rws_guide->params());

  // The separate guide learning rate changes the guide trajectory.
  RunConfig asym = cfg;
  asym.rws_guide_lr = 0.5;
  const TrainResult faster = rws_run(asym, bundle.model, bundle.spec);
  CHECK(faster.rws_guide->params() != result.rws_guide->params());
}

TEST_CASE("direct tuning drives the model to the answer rationale") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 37;
  cfg.steps = 400;
  cfg.opt.lr = 0.1;
  cfg.eval_every = 200;

  const TaskBundle bundle = make_task(cfg.task);
  const TrainResult result =
      supervised_run(cfg, bundle.model, bundle.spec, Method::direct);
  REQUIRE(result.metrics.size() == 400);
  CHECK(greedy_accuracy(result.model, bundle.spec) == 1.0);
  for (std::size_t x = 0; x < result.memory.size(); ++x) {
    CHECK(result.memory[x].valid);
    CHECK(result.memory[x].z ==
          Rationale{{bundle.spec.label(x)}, false});
  }
  // The tuned model beats the uniform initialization on its references.
  CHECK(result.model.log_prob(0, result.memory[0].z) >
        bundle.model.log_prob(0, result.memory[0].z));

  CHECK_THROWS_AS(
      supervised_run(cfg, bundle.model, bundle.spec, Method::trice),
      DomainError);
}

TEST_CASE("supervised reference NLL is non-increasing in the step count") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 43;
  cfg.guide_lambda = 0.8;
  cfg.opt.kind = OptimizerKind::sgd;
  cfg.opt.lr = 0.05;
  cfg.eval_every = 100000;

  const TaskBundle bundle = make_task(cfg.task);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t steps = 20; steps <= 200; steps += 20) {
    cfg.steps = steps;
    const TrainResult result =
        supervised_run(cfg, bundle.model, bundle.spec, Method::cot);
    const double nll = reference_nll(result, bundle.spec);
    CHECK(nll <= previous + 1e-9);
    previous = nll;
  }
}

TEST_CASE("run_method dispatches every training mode") {
  RunConfig cfg;
  cfg.task.name = "parity";
  cfg.task.bits = 2;
  cfg.task.k_total = 4;
  cfg.task.t_max = 2;
  cfg.seed = 47;
  cfg.steps = 5;
  cfg.minibatch = 4;
  cfg.rs_particles = 2;
  cfg.star_outer = 2;
  cfg.star_inner0 = 3;
  cfg.eval_every = 5;
  cfg.opt.lr = 0.05;

  const TaskBundle bundle = make_task(cfg.task);
  for (Method method : {Method::trice, Method::rs, Method::rws,
                        Method::direct, Method::cot}) {
    const TrainResult result = run_method(cfg, bundle.model, bundle.spec, method);
    CHECK(result.metrics.size() == 5);
    CHECK(result.rws_guide.has_value() == (method == Method::rws));
  }
  const TrainResult star = run_method(cfg, bundle.model, bundle.spec,
                                      Method::star);
  CHECK_FALSE(star.metrics.empty());
}

}  // TEST_SUITE("training")
