#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <random>
#include <unordered_map>

#include "fixtures.hpp"
#include "generators.hpp"
#include "hiplan/error.hpp"
#include "hiplan/numeric.hpp"
#include "hiplan/priors.hpp"
#include "oracles.hpp"

using namespace hiplan;
using namespace hiplan::testing;

namespace {
Program P(const char* text) { return parse_program(text); }
const GrammarParams kFig4{1.0, 0.5, 0.1};
}  // namespace

TEST_CASE("step cost and description length") {
  const Task t = s_shape_task();
  const Program p = s_shape_program();
  CHECK(step_cost_logprior(p, t) == -18);
  CHECK(mdl_logprior(p) == -13);
  CHECK(mdl_logprior(Program()) == 0);
  const auto flat = execute(t, p).trace;
  CHECK(step_cost_logprior(Program(to_body(flat)), t) == -static_cast<double>(flat.size()));
  CHECK_THROWS_AS(step_cost_logprior(P("main: walk"), t), NotSolvedError);
}

TEST_CASE("description length ignores structure") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Program p = random_program(rng, 3, 6, 0.3);
    Program q = p;
    // Shuffle every body; length is unchanged.
    for (int k = 0; k < q.num_bodies(); ++k) {
      Body& b = q.mutable_body(k);
      std::shuffle(b.begin(), b.end(), rng);
    }
    CHECK(mdl_logprior(p) == mdl_logprior(q));
    CHECK(mdl_logprior(p) == -program_length(p));
  }
}

TEST_CASE("Dirichlet process call probabilities") {
  CHECK(dp_call_logprob({0}, 0, DpChoice::fresh(), 1.0) == doctest::Approx(0.0));
  CHECK(dp_call_logprob({0, 2}, 2, DpChoice::reuse(1), 1.0) == doctest::Approx(std::log(2.0 / 3)));
  CHECK(dp_call_logprob({0, 2}, 2, DpChoice::fresh(), 1.0) == doctest::Approx(-1.098612).epsilon(1e-6));
  CHECK_THROWS_AS(dp_call_logprob({0, 2}, 2, DpChoice::reuse(2), 1.0), DomainError);
  CHECK_THROWS_AS(dp_call_logprob({0, 0}, 0, DpChoice::reuse(1), 1.0), DomainError);
}

TEST_CASE("grammar prior reference values") {
  CHECK(grammar_logprior(P("main: walk"), kFig4) == doctest::Approx(-4.60517).epsilon(1e-6));
  CHECK(grammar_logprior(P("main: p1 p1\np1: walk walk"), kFig4) ==
        doctest::Approx(-11.50051).epsilon(1e-6));
  // Term-by-term expansion for the S-shape tree.
  const double expected = std::log(0.1) + 8 * std::log(0.9) + std::log(0.1) + 3 * std::log(0.9) +
                          10 * std::log(0.1) + 3 * std::log(0.5) + std::log(1.0 / 2) +
                          std::log(2.0 / 3);
  const double lp = grammar_logprior(s_shape_program(), kFig4);
  CHECK(lp == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(lp - -31.97) <= 0.005);
}

TEST_CASE("grammar prior structural errors") {
  CHECK_THROWS_AS(grammar_logprior(P("main: walk\np1: light"), kFig4), UncalledSubroutineError);
  CHECK_THROWS_AS(grammar_logprior(P("main: walk p2\np1: light"), kFig4), StructureError);
  CHECK_THROWS_AS(grammar_logprior(P("main: walk p3"), kFig4), StructureError);
  CHECK_THROWS_AS(grammar_logprior(Program(), kFig4), StructureError);
  // Self-recursion scores the inner call as reuse.
  const double rec = grammar_logprior(P("main: p1\np1: walk p1"), kFig4);
  const double by_hand = std::log(0.1) + std::log(0.5) + 0.0 + std::log(0.1) + std::log(0.9) +
                         std::log(0.1) + std::log(0.5) + std::log(1.0 / 2);
  CHECK(rec == doctest::Approx(by_hand).epsilon(1e-12));
}

TEST_CASE("closed form matches the traversal") {
  std::mt19937_64 rng(17);
  int compared = 0;
  for (int i = 0; i < 2000; ++i) {
    const Program p = random_program(rng, 4, 6, 0.35);
    const GrammarParams g{0.1 + 5 * uniform01(rng), 0.05 + 0.9 * uniform01(rng),
                          0.05 + 0.9 * uniform01(rng)};
    double direct = 0;
    try {
      direct = grammar_logprior(p, g);
    } catch (const StructureError&) {
      CHECK_THROWS_AS(grammar_features(p), StructureError);
      continue;
    }
    CHECK(grammar_logprior(grammar_features(p), g) == doctest::Approx(direct).epsilon(1e-10));
    ++compared;
  }
  CHECK(compared > 200);
}

TEST_CASE("sampler basics") {
  CHECK(sample_program(kFig4, 42) == sample_program(kFig4, 42));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const Program p = sample_program(GrammarParams{1.0, 1e-12, 0.3}, rng);
    CHECK(p.num_defined_subroutines() == 0);
  }
  // Sampled programs are scoreable and numbered by first use.
  for (int i = 0; i < 2000; ++i) {
    const Program p = sample_program(GrammarParams{1.0, 0.3, 0.4}, rng);
    CHECK(std::isfinite(grammar_logprior(p, GrammarParams{1.0, 0.3, 0.4})));
  }
  std::mt19937_64 big(9);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 100; ++i) sample_program(GrammarParams{1.0, 0.9, 0.001}, big, {200});
      }(),
      BudgetError);
}

TEST_CASE("sampler frequency of the one-walk program") {
  std::mt19937_64 rng = named_stream(0, "test/sampler/walk");
  const int n = 200'000;
  int hits = 0;
  const Program target = P("main: walk");
  for (int i = 0; i < n; ++i) hits += sample_program(kFig4, rng) == target ? 1 : 0;
  const double p = std::exp(-4.60517);
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(static_cast<double>(hits) / n - p) <= 3 * sigma);
}

TEST_CASE("enumeration oracle agrees with the scorer") {
  const auto table = enumerate_grammar(1.0, 0.5, 0.2, 1e-4);
  CHECK(table.size() > 100);
  for (const auto& [text, prob] : table) {
    const double lp = grammar_logprior(parse_program(text, 64), GrammarParams{1.0, 0.2, 0.5});
    CHECK(std::log(prob) == doctest::Approx(lp).epsilon(1e-10));
  }
}

TEST_CASE("sampler and scorer agree in aggregate") {
  // Chi-square goodness of fit over programs with prior >= 1e-3 plus a
  // remainder bin.
  const GrammarParams g{1.0, 0.2, 0.5};
  const auto table = enumerate_grammar(1.0, 0.5, 0.2, 1e-3);
  std::unordered_map<std::string, int> counts;
  std::mt19937_64 rng = named_stream(0, "test/sampler/aggregate");
  const int n = 200'000;
  for (int i = 0; i < n; ++i) ++counts[serialize_program(sample_program(g, rng))];
  double stat = 0, rest_p = 1;
  int rest_n = n;
  for (const auto& [text, prob] : table) {
    const double e = prob * n;
    const int o = counts.count(text) ? counts[text] : 0;
    stat += (o - e) * (o - e) / e;
    rest_p -= prob;
    rest_n -= o;
  }
  stat += (rest_n - rest_p * n) * (rest_n - rest_p * n) / (rest_p * n);
  const double df = static_cast<double>(table.size());
  const double p_value = boost::math::gamma_q(df / 2, stat / 2);
  MESSAGE("chi-square " << stat << " on " << df << " df, p = " << p_value);
  CHECK(p_value > 1e-4);
}

TEST_CASE("higher reuse wins under the grammar prior, ties under description length") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 30; ++i) {
    const ReusePair pair = reuse_pair(rng);
    CHECK(program_length(pair.single) == program_length(pair.split));
    CHECK(mdl_logprior(pair.single) == mdl_logprior(pair.split));
    for (double alpha : {0.01, 0.1, 0.5, 1.0, 2.0, 3.0, 4.23}) {
      const GrammarParams g{alpha, 0.5, 0.1};
      const double a = grammar_logprior(pair.single, g);
      const double b = grammar_logprior(pair.split, g);
      CHECK(a > b);
      // Closed-form ratio of the pair.
      const double ratio = std::log(0.1 / 0.9) + std::log(5 * 0.5 / 0.5) +
                           std::log(alpha / (2 * (3 + alpha)));
      CHECK(b - a == doctest::Approx(ratio).epsilon(1e-9));
    }
  }
}

TEST_CASE("model scores") {
  const Task t = s_shape_task();
  const Program p = s_shape_program();
  CHECK(model_logscore(p, t, ModelSpec{ModelKind::RandomChoice}) == 0);
  CHECK(model_logscore(p, t, ModelSpec{ModelKind::StepCost, 1.31}) == doctest::Approx(-23.58));
  CHECK(model_logscore(p, t, ModelSpec{ModelKind::MDLStepCost, 0.7, 0.4}) ==
        doctest::Approx(0.4 * -13 + 0.7 * -18));
  ModelSpec gi{ModelKind::GrammarInductionStepCost, 0.5, 0, 2.0, kFig4};
  CHECK(model_logscore(p, t, gi) ==
        doctest::Approx(2.0 * grammar_logprior(p, kFig4) + 0.5 * -18));
  CHECK(model_logscore(program_features(p, t), gi) == doctest::Approx(model_logscore(p, t, gi)));
  CHECK_THROWS_AS((ModelSpec{ModelKind::GrammarInduction, 0, 0, 1}.validate()), DomainError);
  CHECK_THROWS_AS((ModelSpec{ModelKind::StepCost, -1}.validate()), DomainError);
  for (ModelKind k : kAllModelKinds) CHECK(model_kind_from_string(to_string(k)) == k);
  CHECK_FALSE(model_kind_from_string("nope"));
}

TEST_CASE("posterior over a corpus") {
  std::vector<ProgramFeatures> fs(2);
  fs[0].steps = 1;
  fs[1].steps = 2;
  const PosteriorTable t = posterior_over_features(fs, ModelSpec{ModelKind::StepCost, 1.0});
  CHECK(t.probabilities[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(t.probabilities[1] == doctest::Approx(0.26894).epsilon(1e-5));
  const PosteriorTable eq = posterior_over_features(fs, ModelSpec{ModelKind::MDL, 1.0});
  CHECK(eq.probabilities[0] == doctest::Approx(0.5));

  const Task sq = square_task();
  const Corpus c = build_corpus(sq, search_traces(sq, compute_heuristic(sq), SearchConfig{10, 100000}));
  for (const ModelSpec& m : {ModelSpec{ModelKind::RandomChoice}, ModelSpec{ModelKind::StepCost, 1.3},
                             ModelSpec{ModelKind::GrammarInduction, 0, 0, 0.5, kFig4}}) {
    const PosteriorTable pt = posterior_over_corpus(c, m);
    double sum = 0;
    for (double q : pt.probabilities) sum += q;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    if (m.kind == ModelKind::RandomChoice) {
      CHECK(pt.probabilities.front() == doctest::Approx(1.0 / static_cast<double>(c.size())));
    }
  }
  CHECK_THROWS_AS(posterior_over_corpus(Corpus("x"), ModelSpec{}), EmptyCorpusError);

  const std::string csv = score_csv(c, {{"sc", ModelSpec{ModelKind::StepCost, 1.0}}});
  CHECK(csv.rfind("task,program_hash,length,steps,sc_logscore,sc_posterior\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == c.size() + 1);
}
