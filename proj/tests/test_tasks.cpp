#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "trice/errors.hpp"
#include "trice/oracle.hpp"
#include "trice/rng.hpp"
#include "trice/stats.hpp"
#include "trice/tasks.hpp"

using namespace trice;
using namespace trice::test;

TEST_SUITE("tasks") {

TEST_CASE("extract_answer reads the final token iff it is an answer") {
  const Vocab v = make_vocab(5, {1, 2});
  CHECK(extract_answer({{}, false}, v) == kInvalidAnswer);
  CHECK(extract_answer({{3}, false}, v) == kInvalidAnswer);
  CHECK(extract_answer({{1}, false}, v) == 1);
  CHECK(extract_answer({{3, 4, 2}, false}, v) == 2);
  CHECK(extract_answer({{2, 3}, false}, v) == kInvalidAnswer);
}

TEST_CASE("binary likelihood is the correctness indicator") {
  const LikelihoodModel lk;  // binary
  CHECK(lk.value(1, 1, 2) == 1.0);
  CHECK(lk.value(2, 1, 2) == 0.0);
  CHECK(lk.value(kInvalidAnswer, 1, 2) == 0.0);
}

TEST_CASE("smoothed likelihood spreads epsilon over the wrong answers") {
  LikelihoodModel lk;
  lk.kind = LikelihoodModel::Kind::smoothed;
  lk.epsilon = 0.2;
  // |A| = 3: correct answer keeps 0.8, each other answer gets 0.1.
  CHECK(lk.value(1, 1, 3) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(lk.value(2, 1, 3) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lk.value(kInvalidAnswer, 1, 3) == 0.0);
  // For a fixed extraction the values sum to one over possible y.
  CHECK(lk.value(1, 1, 3) + lk.value(1, 2, 3) + lk.value(1, 3, 3) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("likelihood model validation") {
  LikelihoodModel lk;
  CHECK_NOTHROW(lk.validate(2));

  lk.kind = LikelihoodModel::Kind::smoothed;
  lk.epsilon = 0.2;
  CHECK_NOTHROW(lk.validate(3));
  CHECK_THROWS_AS(lk.validate(1), DomainError);  // nowhere to spread epsilon
  lk.epsilon = 1.0;
  CHECK_THROWS_AS(lk.validate(3), DomainError);
  lk.epsilon = -0.1;
  CHECK_THROWS_AS(lk.validate(3), DomainError);
}

TEST_CASE("task spec validation and lookups") {
  TaskSpec t = make_binary_task(2, {1, 2}, {1, 2});
  CHECK_NOTHROW(t.validate());
  CHECK(t.label(0) == 1);
  CHECK(t.label(1) == 2);
  CHECK_THROWS_AS(t.label(2), DomainError);
  CHECK(t.answer_index(2) == 1);
  CHECK_THROWS_AS(t.answer_index(3), DomainError);
  CHECK(t.extract({{2}, false}) == 2);

  TaskSpec bad = t;
  bad.labels = {1};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = t;
  bad.labels = {1, 3};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = t;
  bad.answer_space = {1, 1};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = t;
  bad.answer_space.clear();
  bad.labels.clear();
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("correctness compares the extraction against y") {
  const TaskSpec t = make_binary_task(1, {1, 2}, {1});
  CHECK(correctness({{1}, false}, 1, t) == 1);
  CHECK(correctness({{2}, false}, 1, t) == 0);
  CHECK(correctness({{}, false}, 1, t) == 0);
  CHECK_THROWS_AS(correctness({{1}, false}, 99, t), DomainError);
  CHECK(likelihood({{1}, false}, 1, t) == 1.0);
  CHECK(likelihood({{2}, false}, 1, t) == 0.0);
}

TEST_CASE("parity task labels by popcount") {
  TaskParams params;
  params.name = "parity";
  params.bits = 4;
  params.k_total = 8;
  params.t_max = 4;
  const TaskBundle bundle = make_task(params);

  CHECK(bundle.spec.question_count == 16);
  CHECK(bundle.spec.answer_space == std::vector<int>{1, 2});
  CHECK(bundle.model.question_count() == 16);
  CHECK(bundle.model.k() == 8);
  CHECK(bundle.model.vocab().eos_id == 0);
  CHECK(bundle.hard_questions.empty());
  for (std::size_t x = 0; x < 16; ++x) {
    const int expected =
        std::popcount(x) % 2 == 0 ? 1 : 2;  // even parity -> first answer
    CHECK(bundle.spec.label(x) == expected);
  }
  CHECK(bundle.spec.label(0b11) == 1);
  CHECK(bundle.spec.label(0b1) == 2);

  params.answer_count = 3;
  CHECK_THROWS_AS(make_task(params), DomainError);
  params.answer_count = 2;
  params.bits = 0;
  CHECK_THROWS_AS(make_task(params), DomainError);
  params.bits = 21;
  CHECK_THROWS_AS(make_task(params), DomainError);
}

TEST_CASE("modsum task labels by digit sum") {
  TaskParams params;
  params.name = "modsum";
  params.question_count = 30;
  params.k_total = 8;
  params.answer_count = 3;
  params.modsum_base = 10;
  const TaskBundle bundle = make_task(params);

  CHECK(bundle.spec.question_count == 30);
  CHECK(bundle.spec.answer_space == std::vector<int>{1, 2, 3});
  CHECK(bundle.spec.label(17) == 3);  // 1+7 = 8, 8 % 3 = 2 -> third answer
  CHECK(bundle.spec.label(0) == 1);
  CHECK(bundle.spec.label(10) == 2);

  params.question_count = 0;
  CHECK_THROWS_AS(make_task(params), DomainError);
  params.question_count = 30;
  params.modsum_base = 1;
  CHECK_THROWS_AS(make_task(params), DomainError);
}

TEST_CASE("k_total must cover EOS plus the answers") {
  TaskParams params;
  params.name = "parity";
  params.bits = 2;
  params.k_total = 2;  // only room for EOS and one answer
  CHECK_THROWS_AS(make_task(params), DomainError);
}

TEST_CASE("adversarial task biases the gold logit on the hard half") {
  TaskParams params;
  params.name = "adversarial";
  params.bits = 3;  // Q = 8
  params.k_total = 6;
  params.t_max = 3;
  params.hard_fraction = 0.5;
  params.hard_bias = -6.0;
  params.easy_boost = 2.0;
  const TaskBundle bundle = make_task(params);
  TabularLM model = bundle.model;  // mutable copy for v() access

  CHECK(bundle.hard_questions == std::vector<std::size_t>{0, 1, 2, 3});
  for (std::size_t x = 0; x < 8; ++x) {
    const auto y = static_cast<std::size_t>(bundle.spec.label(x));
    CHECK(model.v(x, y) == (x < 4 ? -6.0 : 2.0));
  }

  // The bias makes the gold answer rare on hard questions and common on
  // easy ones.
  for (std::size_t x = 0; x < 8; ++x) {
    const EnumerationTable table = enumerate(bundle.model, x);
    const double marginal =
        exact_marginal(table, bundle.spec, bundle.spec.label(x));
    if (x < 4)
      CHECK(marginal < 0.01);
    else
      CHECK(marginal > 0.3);
  }
}

TEST_CASE("init_eos_logit seeds every U row including BOS") {
  TaskParams params;
  params.name = "parity";
  params.bits = 2;
  params.k_total = 5;
  params.init_eos_logit = 1.25;
  const TaskBundle bundle = make_task(params);
  TabularLM model = bundle.model;
  for (std::size_t row = 0; row <= model.k(); ++row) {
    CHECK(model.u(row, 0) == 1.25);
    for (std::size_t j = 1; j < model.k(); ++j) CHECK(model.u(row, j) == 0.0);
  }
}

TEST_CASE("guide with lambda=1 is the exact posterior") {
  // t_max=1 and answers {1,2}: the only correct rationale for y is (y).
  const TabularLM base = uniform_model(3, 1, 2, {1, 2});
  const TaskSpec task = make_binary_task(2, {1, 2}, {1, 2});
  const Guide guide(base, task, 1.0, kDefaultEnumCap);
  CHECK(guide.enumerable());

  RngEngine eng(3);
  for (int i = 0; i < 200; ++i) {
    CHECK(guide.sample(0, 1, eng) == Rationale{{1}, true});
    CHECK(guide.sample(1, 2, eng) == Rationale{{2}, true});
  }
  CHECK(guide.mode(0, 1) == Rationale{{1}, true});
  CHECK(guide.mode(0, 2) == Rationale{{2}, true});
}

TEST_CASE("guide with lambda=0 reproduces the prior (chi-square)") {
  RngEngine init(11);
  const TabularLM base = random_model(3, 1, 1, {1, 2}, init, 0.7);
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const Guide guide(base, task, 0.0, kDefaultEnumCap);

  const EnumerationTable table = enumerate(base, 0);
  const std::size_t n = 100000;
  std::vector<double> expected(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    expected[i] = table.probs[i] * static_cast<double>(n);

  std::vector<double> observed(table.size(), 0.0);
  RngEngine eng(12);
  for (std::size_t i = 0; i < n; ++i)
    observed[table.index_of(guide.sample(0, 1, eng))] += 1.0;

  const ChiSquareResult gof = chi_square_gof(expected, observed);
  CHECK(gof.p_value > 0.001);
}

TEST_CASE("guide hint rate interpolates posterior and prior") {
  RngEngine init(21);
  const TabularLM base = random_model(3, 2, 1, {1, 2}, init, 0.7);
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const double lambda = 0.5;
  const Guide guide(base, task, lambda, kDefaultEnumCap);

  const EnumerationTable table = enumerate(base, 0);
  const double marginal = exact_marginal(table, task, 1);
  const double expected_rate = lambda + (1.0 - lambda) * marginal;

  const std::size_t n = 100000;
  RngEngine eng(22);
  Vec hits(n);
  for (std::size_t i = 0; i < n; ++i)
    hits[i] = correctness(guide.sample(0, 1, eng), 1, task) == 1 ? 1.0 : 0.0;
  CHECK(within_sigmas(mc_summary(hits), expected_rate));
}

TEST_CASE("guide mode maximizes the mixture (brute-force argmax)") {
  RngEngine init(33);
  const TabularLM base = random_model(4, 3, 3, {1, 2}, init);
  std::vector<int> labels = {1, 2, 1};
  const TaskSpec task = make_binary_task(3, {1, 2}, labels);
  const double lambda = 0.3;
  const Guide guide(base, task, lambda, kDefaultEnumCap);

  for (std::size_t x = 0; x < 3; ++x) {
    const EnumerationTable table = enumerate(base, x);
    for (int y : task.answer_space) {
      const double marginal = exact_marginal(table, task, y);
      std::size_t best = 0;
      double best_score = -1.0;
      for (std::size_t i = 0; i < table.size(); ++i) {
        const double post =
            correctness(table.seqs[i], y, task) * table.probs[i] / marginal;
        const double score =
            lambda * post + (1.0 - lambda) * table.probs[i];
        if (score > best_score) {  // strict: earliest argmax wins ties
          best_score = score;
          best = i;
        }
      }
      CHECK(guide.mode(x, y) == table.seqs[best]);
    }
  }
}

TEST_CASE("guide outside the enumeration cap refuses to sample") {
  const TabularLM base = uniform_model(3, 3, 1, {1, 2});  // 15 sequences
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const Guide guide(base, task, 0.5, 10);
  CHECK_FALSE(guide.enumerable());
  RngEngine eng(1);
  CHECK_THROWS_AS(guide.sample(0, 1, eng), CapabilityError);
  CHECK_THROWS_AS(guide.mode(0, 1), CapabilityError);
}

TEST_CASE("guide validates its arguments") {
  const TabularLM base = uniform_model(3, 1, 1, {1, 2});
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  CHECK_THROWS_AS(Guide(base, task, -0.1, kDefaultEnumCap), DomainError);
  CHECK_THROWS_AS(Guide(base, task, 1.1, kDefaultEnumCap), DomainError);

  const TaskSpec wide = make_binary_task(2, {1, 2}, {1, 2});
  CHECK_THROWS_AS(Guide(base, wide, 0.5, kDefaultEnumCap), DomainError);

  const Guide guide(base, task, 0.5, kDefaultEnumCap);
  RngEngine eng(1);
  CHECK_THROWS_AS(guide.sample(1, 1, eng), DomainError);   // question range
  CHECK_THROWS_AS(guide.sample(0, 99, eng), DomainError);  // bad answer
}

}  // TEST_SUITE("tasks")
