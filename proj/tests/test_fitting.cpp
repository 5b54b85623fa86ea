#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "fixtures.hpp"
#include "hiplan/error.hpp"
#include "hiplan/fitting.hpp"
#include "hiplan/search.hpp"

using namespace hiplan;
using namespace hiplan::testing;

namespace {

struct World {
  std::map<std::string, Task> tasks;
  std::map<std::string, Corpus> corpora;
};

World small_world() {
  World w;
  for (Task t : {square_task(), row_task(5, {2, 4}, "row5"), s_shape_task()}) {
    const auto ts = search_traces(t, compute_heuristic(t), SearchConfig{20, 5'000'000});
    w.corpora.emplace(t.id(), build_corpus(t, ts));
    w.tasks.emplace(t.id(), t);
  }
  return w;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_fields(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string f;
  while (std::getline(in, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST_CASE("BIC and likelihood-ratio reference values") {
  // Table-style values: k ln(1668) - 2 LL.
  CHECK(bic(-21694.7, 1, 1668) == doctest::Approx(43396.819).epsilon(1e-7));
  CHECK(bic(0, 3, 1668) == doctest::Approx(3 * 7.41938).epsilon(1e-5));
  const LrTest t = lr_test(-10000.0, -4170.8, 3);
  CHECK(t.stat == doctest::Approx(11658.4));
  CHECK(t.p < 1e-300);
  CHECK(lr_test(0, 3.841458820694124 / 2, 1).p == doctest::Approx(0.05).epsilon(1e-6));
  const LrTest same = lr_test(-5, -5, 2);
  CHECK(same.stat == 0);
  CHECK(same.p == 1);
  CHECK(lr_test(-4, -5, 2).stat == 0);
  // df=2 tail is exp(-x/2)
  CHECK(chi_square_upper_tail(3.0, 2) == doctest::Approx(std::exp(-1.5)));
  CHECK_THROWS_AS(chi_square_upper_tail(1.0, 0), DomainError);
}

TEST_CASE("JS divergence") {
  CHECK(js_divergence({0.5, 0.5}, {1, 0}) == doctest::Approx(0.215762).epsilon(1e-6));
  CHECK(js_divergence({0.2, 0.8}, {0.2, 0.8}) == doctest::Approx(0));
  CHECK(js_divergence({1, 0}, {0, 1}) == doctest::Approx(std::log(2.0)));
  CHECK(js_divergence({0.1, 0.9}, {0.6, 0.4}) == doctest::Approx(js_divergence({0.6, 0.4}, {0.1, 0.9})));
  CHECK_THROWS_AS(js_divergence({1}, {0.5, 0.5}), SupportMismatchError);
}

TEST_CASE("logsumexp and simplex minimization") {
  const std::vector<double> x = {1000, 1000};
  CHECK(logsumexp(x) == doctest::Approx(1000 + std::log(2.0)));
  const std::vector<double> y = {-1e300, std::log(3.0)};
  CHECK(logsumexp(y) == doctest::Approx(std::log(3.0)));

  auto rosen = [](const std::vector<double>& v) {
    return 100 * std::pow(v[1] - v[0] * v[0], 2) + std::pow(1 - v[0], 2);
  };
  NelderMeadOptions o;
  o.max_iterations = 5000;
  o.rel_tolerance = 1e-14;
  const auto r = nelder_mead(rosen, {-1.2, 1.0}, o);
  CHECK(r.x[0] == doctest::Approx(1).epsilon(1e-3));
  CHECK(r.x[1] == doctest::Approx(1).epsilon(1e-3));

  auto quad = [](const std::vector<double>& v) {
    return std::pow(v[0] - 3, 2) + 2 * std::pow(v[1] + 1, 2) + std::pow(v[2], 2);
  };
  const auto q = nelder_mead(quad, {0, 0, 0});
  CHECK(q.converged);
  CHECK(q.x[0] == doctest::Approx(3).epsilon(1e-3));
  CHECK(q.x[1] == doctest::Approx(-1).epsilon(1e-3));
}

TEST_CASE("dataset JSONL round trip and errors") {
  Dataset d;
  d.records.push_back({"a", "square", parse_program("main: walk light"), 12.5, 3});
  d.records.push_back({"b", "row5", parse_program("main: p1 p1\np1: walk light"), std::nullopt, std::nullopt});
  const std::string text = write_dataset(d);
  CHECK(split_lines(text).size() == 2);
  CHECK(text.find("\"participant\":\"a\",\"task\":\"square\"") != std::string::npos);
  const Dataset back = parse_dataset("\n" + text + "\n");
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].participant == "a");
  CHECK(back.records[0].rt_seconds == 12.5);
  CHECK(back.records[0].n_evals == 3);
  CHECK(!back.records[1].rt_seconds);
  CHECK(serialize_program(back.records[1].program) == serialize_program(d.records[1].program));
  CHECK(write_dataset(back) == text);

  try {
    parse_dataset(text + "{\"participant\": \"c\"}\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dataset("not json"), ParseError);
}

TEST_CASE("preparing fit data unions observed programs") {
  World w = small_world();
  const std::size_t before = w.corpora.at("square").size();
  Dataset d;
  // A solving detour that is not among the searched traces.
  const Program detour = parse_program(
      "main: walk light right walk light right walk left left walk right right walk light");
  d.records.push_back({"a", "square", detour, std::nullopt, std::nullopt});
  d.records.push_back({"b", "square", detour, std::nullopt, std::nullopt});
  const Program in_corpus = w.corpora.at("row5").entries().front().program;
  d.records.push_back({"c", "row5", in_corpus, std::nullopt, std::nullopt});

  UnionStats st;
  const FitData fd = prepare_fit_data(d, w.tasks, w.corpora, &st);
  CHECK(fd.n == 3);
  CHECK(st.records == 3);
  CHECK(st.distinct == 2);
  CHECK(st.found == 1);
  CHECK(st.unioned == 1);
  CHECK(st.coverage() == doctest::Approx(0.5));
  CHECK(w.corpora.at("square").size() == before + 1);
  REQUIRE(fd.tasks.size() == 2);
  CHECK(fd.tasks[0].task_id == "row5");
  CHECK(fd.tasks[1].total == 2);

  World strict = small_world();
  CHECK_THROWS_AS(prepare_fit_data(d, strict.tasks, strict.corpora, nullptr, false),
                  MissingProgramError);

  Dataset bad;
  bad.records.push_back({"x", "square", parse_program("main: walk"), std::nullopt, std::nullopt});
  try {
    prepare_fit_data(bad, w.tasks, w.corpora);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("participant 'x'") != std::string::npos);
  }
  Dataset unknown;
  unknown.records.push_back({"y", "nowhere", detour, std::nullopt, std::nullopt});
  CHECK_THROWS_AS(prepare_fit_data(unknown, w.tasks, w.corpora), MissingProgramError);
}

TEST_CASE("likelihoods over feature classes") {
  World w = small_world();
  auto rng = named_stream(7, "test/sim");
  ModelSpec sc;
  sc.kind = ModelKind::StepCost;
  sc.beta_step_cost = 1.0;
  const Dataset d = simulate_dataset(w.corpora, sc, 300, rng);
  CHECK(d.records.size() == 300);
  CHECK(d.records[0].participant == "sim-0");
  const FitData fd = prepare_fit_data(d, w.tasks, w.corpora);

  // Uniform choice: each observation costs log(corpus size).
  ModelSpec rc;
  double expect = 0;
  for (const auto& t : fd.tasks) expect -= t.total * std::log(static_cast<double>(t.entry_class.size()));
  CHECK(dataset_loglik(fd, rc) == doctest::Approx(expect));

  // Class-level likelihood equals the per-program posterior.
  double direct = 0;
  for (const auto& t : fd.tasks) {
    const PosteriorTable post = posterior_over_corpus(w.corpora.at(t.task_id), sc);
    for (const auto& [entry, count] : t.observed) direct += count * std::log(post.probabilities[entry]);
  }
  CHECK(dataset_loglik(fd, sc) == doctest::Approx(direct));

  // Marginal over the grid lies between its extremes.
  ModelSpec gi;
  gi.kind = ModelKind::GrammarInduction;
  gi.beta_grammar = 0.7;
  gi.grammar = GrammarParams{1.5, 0.3, 0.5};
  const LoglikDetail det = dataset_loglik_detail(fd, gi);
  REQUIRE(det.grid.size() == kDefaultPEndGrid.size());
  const double lo = *std::min_element(det.grid.begin(), det.grid.end());
  const double hi = *std::max_element(det.grid.begin(), det.grid.end());
  CHECK(det.total >= lo - 1e-9);
  CHECK(det.total <= hi + 1e-9);
  for (std::size_t g = 0; g < kDefaultPEndGrid.size(); ++g) {
    ModelSpec at = gi;
    at.grammar->p_end = kDefaultPEndGrid[g];
    double v = 0;
    for (const auto& t : fd.tasks) {
      const auto post = class_posterior(t, at);
      for (const auto& [entry, count] : t.observed) {
        // class mass spread evenly over its members
        const std::size_t c = t.entry_class[entry];
        v += count * (std::log(post[c]) - t.classes[c].log_multiplicity);
      }
    }
    CHECK(det.grid[g] == doctest::Approx(v));
  }
}

TEST_CASE("fitting recovers a step-cost weight and respects nesting") {
  World w = small_world();
  auto rng = named_stream(11, "test/sim");
  ModelSpec truth;
  truth.kind = ModelKind::StepCost;
  truth.beta_step_cost = 1.0;
  const Dataset d = simulate_dataset(w.corpora, truth, 1500, rng);
  const FitData fd = prepare_fit_data(d, w.tasks, w.corpora);
  FitOptions opt;
  opt.restarts = 8;
  const FitResult sc = fit_model(ModelKind::StepCost, fd, opt);
  CHECK(sc.k == 1);
  CHECK(sc.n == 1500);
  CHECK(sc.model.beta_step_cost == doctest::Approx(1.0).epsilon(0.2));
  CHECK(sc.bic == doctest::Approx(bic(sc.loglik, 1, 1500)));
  CHECK(sc.restarts_run == 8);
  CHECK(sc.restart_logliks.size() == 8);

  const FitResult again = fit_model(ModelKind::StepCost, fd, opt);
  CHECK(again.loglik == sc.loglik);
  CHECK(again.model.beta_step_cost == sc.model.beta_step_cost);
  opt.jobs = 3;
  const FitResult threaded = fit_model(ModelKind::StepCost, fd, opt);
  CHECK(threaded.loglik == sc.loglik);
  CHECK(threaded.best_restart == sc.best_restart);
  opt.jobs = 1;

  const FitResult rc = fit_model(ModelKind::RandomChoice, fd, opt);
  CHECK(rc.k == 0);
  CHECK(sc.loglik > rc.loglik);
  const FitResult both = fit_model(ModelKind::MDLStepCost, fd, opt);
  CAPTURE(both.loglik - sc.loglik);
  CAPTURE(both.model.beta_mdl);
  CHECK(both.loglik >= sc.loglik - 1e-6);
  const FitResult gi = fit_model(ModelKind::GrammarInduction, fd, opt);
  REQUIRE(gi.p_end_mode);
  CHECK(std::find(kDefaultPEndGrid.begin(), kDefaultPEndGrid.end(), *gi.p_end_mode) !=
        kDefaultPEndGrid.end());
  CHECK(parameter_names(ModelKind::GrammarInductionStepCost).size() == 4);

  const std::vector<FitResult> fits = {rc, sc, both, gi};
  const auto report = split_lines(fit_report_csv(fits));
  CHECK(report[0] == "model,loglik,bic,k,parameters");
  CHECK(report[2].rfind("step-cost,", 0) == 0);
  CHECK(report[2].find("beta_StepCost=") != std::string::npos);

  // Each column of the per-task table sums to that model's BIC.
  const auto rows = split_lines(task_bic_csv(fd, fits));
  REQUIRE(rows.size() == fd.tasks.size() + 4);
  for (std::size_t m = 0; m < fits.size(); ++m) {
    double sum = 0;
    for (std::size_t r = 1; r + 1 < rows.size(); ++r) sum += std::stod(split_fields(rows[r])[m + 1]);
    CHECK(sum == doctest::Approx(fits[m].bic));
    CHECK(std::stod(split_fields(rows.back())[m + 1]) == doctest::Approx(fits[m].bic));
  }

  const auto var = variability_report(fd, gi.model, sc.model);
  REQUIRE(var.size() == fd.tasks.size());
  for (const auto& v : var) {
    CHECK(v.observations == 500);
    CHECK(v.modal_count <= v.observations);
    CHECK(v.unique_programs >= 1);
    REQUIRE(v.js_grammar_step_cost);
    CHECK(*v.js_grammar_step_cost >= 0);
    CHECK(*v.js_grammar_step_cost <= std::log(2.0) + 1e-12);
  }
  CHECK(split_lines(variability_csv(var)).size() == var.size() + 1);
}
