#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "trice/errors.hpp"
#include "trice/model.hpp"
#include "trice/oracle.hpp"
#include "trice/rng.hpp"
#include "trice/stats.hpp"

using namespace trice;
using namespace trice::test;

TEST_SUITE("oracle") {

TEST_CASE("enumeration is complete, normalized and length-major") {
  RngEngine eng(77);
  const TabularLM m = random_model(3, 2, 1, {1, 2}, eng);
  const EnumerationTable table = enumerate(m, 0);

  REQUIRE(table.size() == 7);
  CHECK(table.question == 0);
  CHECK(table.total_mass() == doctest::Approx(1.0).epsilon(1e-12));

  // Length-major, lexicographic within a length; probabilities agree with
  // the model exactly.
  for (std::size_t i = 0; i + 1 < table.size(); ++i) {
    const auto& a = table.seqs[i].tokens;
    const auto& b = table.seqs[i + 1].tokens;
    const bool ordered =
        a.size() < b.size() ||
        (a.size() == b.size() &&
         std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()));
    CHECK(ordered);
  }
  CHECK(table.seqs.front().empty());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(table.log_probs[i] ==
          doctest::Approx(m.log_prob(0, table.seqs[i])).epsilon(1e-12));
    CHECK(table.probs[i] ==
          doctest::Approx(std::exp(table.log_probs[i])).epsilon(1e-12));
    CHECK(table.seqs[i].forced_termination == (table.seqs[i].size() == 2));
  }

  CHECK(enumerate(uniform_model(3, 4), 0).size() == 31);
}

TEST_CASE("answer masses partition the sequence space") {
  RngEngine eng(78);
  const TabularLM m = random_model(4, 3, 2, {1, 2}, eng);
  const TaskSpec task = make_binary_task(2, {1, 2}, {1, 2});
  for (std::size_t x = 0; x < 2; ++x) {
    const EnumerationTable table = enumerate(m, x);
    REQUIRE(table.answer_mass.size() == 2);
    double mass = table.invalid_mass;
    for (const auto& [a, p] : table.answer_mass) {
      CHECK((a == 1 || a == 2));
      mass += p;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    // Binary marginal is exactly the answer mass.
    CHECK(exact_marginal(table, task, 1) ==
          doctest::Approx(table.answer_mass.at(1)).epsilon(1e-12));
    CHECK(exact_marginal(table, task, 2) ==
          doctest::Approx(table.answer_mass.at(2)).epsilon(1e-12));
  }
}

TEST_CASE("enumeration respects the cap and question range") {
  const TabularLM m = uniform_model(8, 4);  // 2801 sequences
  CHECK_THROWS_AS(enumerate(m, 0, 1000), CapabilityError);
  CHECK_NOTHROW(enumerate(m, 0, 2801));
  CHECK_THROWS_AS(enumerate(m, 1), DomainError);
}

TEST_CASE("index_of inverts the table") {
  const TabularLM m = uniform_model(3, 2);
  const EnumerationTable table = enumerate(m, 0);
  for (std::size_t i = 0; i < table.size(); ++i)
    CHECK(table.index_of(table.seqs[i]) == i);
  CHECK(table.index_of({{2, 2, 1}, false}) == table.size());
}

TEST_CASE("uniform one-answer model has marginal 1/3 at t_max=1") {
  const TabularLM m = uniform_model(3, 1);  // (), (1), (2) each 1/3
  const TaskSpec task = make_binary_task(1, {1}, {1});
  const EnumerationTable table = enumerate(m, 0);
  CHECK(exact_marginal(table, task, 1) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(exact_marginal(table, task, 2), DomainError);
}

TEST_CASE("two-symbol model: marginal is one minus the empty mass") {
  // With only EOS and one answer symbol every non-empty rationale is
  // correct, so p(y|x) + p(empty) = 1 exactly.
  RngEngine eng(79);
  const TabularLM m = random_model(2, 3, 1, {1}, eng);
  const TaskSpec task = make_binary_task(1, {1}, {1});
  const EnumerationTable table = enumerate(m, 0);
  CHECK(exact_marginal(table, task, 1) ==
        doctest::Approx(1.0 - table.probs[0]).epsilon(1e-12));
  CHECK(table.invalid_mass == doctest::Approx(table.probs[0]).epsilon(1e-12));
}

TEST_CASE("smoothed marginals mix the answer masses") {
  const TabularLM m = uniform_model(3, 1, 1, {1, 2});
  const TaskSpec task = make_smoothed_task(1, {1, 2}, {1}, 0.2);
  const EnumerationTable table = enumerate(m, 0);
  // marginal(1) = p((1))*0.8 + p((2))*0.2 = 1/3.
  CHECK(exact_marginal(table, task, 1) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // Summing over y recovers the valid mass.
  CHECK(exact_marginal(table, task, 1) + exact_marginal(table, task, 2) ==
        doctest::Approx(1.0 - table.invalid_mass).epsilon(1e-12));
}

TEST_CASE("marginal agrees with Monte Carlo sampling") {
  RngEngine eng(80);
  const TabularLM m = random_model(3, 2, 1, {1, 2}, eng);
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const double marginal = exact_marginal(enumerate(m, 0), task, 1);

  const std::size_t n = 100000;
  RngEngine sampler(81);
  Vec hits(n);
  for (std::size_t i = 0; i < n; ++i)
    hits[i] =
        correctness(m.sample_rationale(0, 1.0, sampler), 1, task) == 1 ? 1.0
                                                                       : 0.0;
  CHECK(within_sigmas(mc_summary(hits), marginal));
}

TEST_CASE("posterior sampler draws from the exact posterior") {
  RngEngine eng(82);
  const TabularLM m = random_model(3, 2, 1, {1, 2}, eng, 0.7);
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const EnumerationTable table = enumerate(m, 0);
  const PosteriorSampler sampler(table, task, 1);
  CHECK(sampler.marginal() ==
        doctest::Approx(exact_marginal(table, task, 1)).epsilon(1e-12));

  const std::size_t n = 100000;
  std::vector<double> expected(table.size(), 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    if (correctness(table.seqs[i], 1, task) == 1)
      expected[i] =
          table.probs[i] / sampler.marginal() * static_cast<double>(n);

  std::vector<double> observed(table.size(), 0.0);
  RngEngine draw(83);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = sampler.sample_index(draw);
    CHECK(expected[idx] > 0.0);  // only correct rationales are drawn
    observed[idx] += 1.0;
  }
  CHECK(chi_square_gof(expected, observed).p_value > 0.001);
}

TEST_CASE("posterior sampler is a point mass on a unique support") {
  const TabularLM m = uniform_model(3, 1, 1, {1, 2});
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const EnumerationTable table = enumerate(m, 0);
  RngEngine eng(84);
  for (int i = 0; i < 50; ++i)
    CHECK(exact_posterior_sample(table, task, 1, eng) ==
          Rationale{{1}, true});
}

TEST_CASE("posterior sampler refuses an empty support") {
  const TaskSpec task = make_binary_task(1, {1}, {1});
  const EnumerationTable table =
      hand_table(0, {{{}, false}}, {1.0}, task);  // all mass on invalid
  CHECK_THROWS_AS(PosteriorSampler(table, task, 1), NoSupportError);
  RngEngine eng(1);
  CHECK_THROWS_AS(exact_posterior_sample(table, task, 1, eng), NoSupportError);
}

TEST_CASE("exact gradient matches finite differences of the log marginal") {
  RngEngine eng(85);
  TabularLM m = random_model(3, 2, 2, {1, 2}, eng);
  const TaskSpec task = make_binary_task(2, {1, 2}, {1, 2});
  for (std::size_t x = 0; x < 2; ++x) {
    const int y = task.label(x);
    const Vec grad = exact_gradient(m, enumerate(m, x), task, y);
    const Vec fd = central_difference(
        m,
        [&] { return std::log(exact_marginal(enumerate(m, x), task, y)); },
        1e-5);
    CHECK(max_rel_err(grad, fd) < 1e-6);
  }
}

TEST_CASE("coordinate_score picks single gradient entries") {
  RngEngine eng(86);
  const TabularLM m = random_model(4, 3, 1, {1, 2}, eng);
  RngEngine draw(87);
  for (int i = 0; i < 20; ++i) {
    const Rationale z = m.sample_rationale(0, 1.0, draw);
    const Vec g = m.grad_log_prob(0, z);
    const std::size_t coord = draw() % m.param_count();
    CHECK(coordinate_score(m, 0, z, coord) ==
          doctest::Approx(g[coord]).epsilon(1e-12));
  }
}

TEST_CASE("exact moments satisfy the score and decomposition identities") {
  RngEngine eng(88);
  const TabularLM m = random_model(3, 2, 1, {1, 2}, eng);
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const EnumerationTable table = enumerate(m, 0);
  for (std::size_t coord = 0; coord < m.param_count(); ++coord) {
    const EstimatorMoments mo = exact_moments(m, table, task, 1, coord);
    CHECK(mo.plus_defined);
    CHECK(mo.minus_defined);
    CHECK(mo.pi > 0.0);
    CHECK(mo.pi < 1.0);
    CHECK(mo.pi == doctest::Approx(exact_marginal(table, task, 1))
                       .epsilon(1e-12));
    // pi*g+ + (1-pi)*g- = 0 (the prior-mean score vanishes).
    CHECK(std::abs(mo.pi * mo.g_plus + (1.0 - mo.pi) * mo.g_minus) < 1e-9);
    // v = pi*(v+ + g+^2) + (1-pi)*(v- + g-^2).
    const double recomposed = mo.pi * (mo.v_plus + mo.g_plus * mo.g_plus) +
                              (1.0 - mo.pi) *
                                  (mo.v_minus + mo.g_minus * mo.g_minus);
    CHECK(mo.v == doctest::Approx(recomposed).epsilon(1e-9));
  }
  CHECK_THROWS_AS(
      exact_moments(m, table, make_smoothed_task(1, {1, 2}, {1}, 0.2), 1, 0),
      DomainError);
}

TEST_CASE("degenerate partitions flag their empty branch") {
  const TabularLM m = uniform_model(2, 2);
  const TaskSpec task = make_binary_task(1, {1}, {1});

  // Every rationale correct: pi = 1, the incorrect branch is undefined.
  const EnumerationTable all_correct = hand_table(
      0, {{{1}, false}, {{1, 1}, true}}, {0.25, 0.75}, task);
  const EstimatorMoments plus = exact_moments(m, all_correct, task, 1, 0);
  CHECK(plus.pi == 1.0);
  CHECK(plus.plus_defined);
  CHECK_FALSE(plus.minus_defined);

  // No correct rationale: pi = 0, the correct branch is undefined.
  const EnumerationTable none_correct =
      hand_table(0, {{{}, false}}, {1.0}, task);
  const EstimatorMoments minus = exact_moments(m, none_correct, task, 1, 0);
  CHECK(minus.pi == 0.0);
  CHECK_FALSE(minus.plus_defined);
  CHECK(minus.minus_defined);

  CHECK_THROWS_AS(
      variance_identities(m, all_correct, task, 1, plus, 0.5, 0),
      UndefinedMomentError);
  CHECK_THROWS_AS(brute_force_pair_stats(m, none_correct, task, 1, 0.5, 0),
                  NoSupportError);
}

TEST_CASE("closed forms agree with brute-force pair enumeration") {
  RngEngine eng(89);
  const TabularLM m = random_model(3, 2, 1, {1, 2}, eng);
  const TaskSpec task = make_binary_task(1, {1, 2}, {1});
  const EnumerationTable table = enumerate(m, 0);
  const std::size_t coord = 4;
  const EstimatorMoments mo = exact_moments(m, table, task, 1, coord);

  for (double beta : {0.0, 0.3, mo.pi, 1.0}) {
    const VarianceReport report =
        variance_identities(m, table, task, 1, mo, beta, coord);
    const PairBruteStats brute =
        brute_force_pair_stats(m, table, task, 1, beta, coord);
    CHECK(report.var_hat_g ==
          doctest::Approx(brute.var_hat_g).epsilon(1e-8));
    CHECK(mo.pi * mo.v_plus ==
          doctest::Approx(brute.e_gprime_gtilde).epsilon(1e-9));
    CHECK(report.debiased_mean ==
          doctest::Approx(brute.debiased_mean).epsilon(1e-9));
    // Incorrect-only variance and debiased mean closed forms.
    const double incorrect_formula =
        (1.0 - mo.pi) / (mo.pi * mo.pi) *
        (mo.v_minus + mo.pi * mo.g_minus * mo.g_minus);
    CHECK(incorrect_formula ==
          doctest::Approx(brute.incorrect_only_var).epsilon(1e-8));
    CHECK(brute.debiased_mean == doctest::Approx(mo.g_plus).epsilon(1e-9));
  }

  // beta = 0 reduces the variance to v+; beta = pi gives the near-optimal
  // variance (1-2pi^2)v+ + pi^2 v.
  const VarianceReport at0 =
      variance_identities(m, table, task, 1, mo, 0.0, coord);
  CHECK(at0.var_hat_g == doctest::Approx(mo.v_plus).epsilon(1e-12));
  const VarianceReport at_pi =
      variance_identities(m, table, task, 1, mo, mo.pi, coord);
  CHECK(at_pi.var_hat_g == doctest::Approx(at_pi.v_pi).epsilon(1e-12));
  CHECK(at_pi.beta_star == doctest::Approx(mo.pi * mo.v_plus / mo.v));
  CHECK(at_pi.v_star ==
        doctest::Approx(mo.v_plus * (1.0 - mo.pi * mo.pi * mo.v_plus / mo.v)));
}

}  // TEST_SUITE("oracle")
