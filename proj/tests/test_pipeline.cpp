#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "hiplan/error.hpp"
#include "hiplan/pipeline.hpp"
#include "hiplan/search.hpp"

using namespace hiplan;
using namespace hiplan::testing;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("hiplan-test-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

PipelineConfig config_in(const TempDir& dir) {
  PipelineConfig cfg;
  cfg.task_dir = dir.path / "tasks";
  cfg.out_dir = dir.path / "out";
  cfg.min_traces = 10;
  cfg.restarts = 2;
  for (const Task& t : {square_task(), two_cell_task()}) {
    write_file_atomic(cfg.task_dir / (t.id() + ".json"), task_to_json(t));
  }
  return cfg;
}

}  // namespace

TEST_CASE("exit codes follow the error kind") {
  CHECK(exit_code_for(ParseError("x")) == 2);
  CHECK(exit_code_for(ValidationError("x")) == 2);
  CHECK(exit_code_for(NotSolvedError("x")) == 2);
  CHECK(exit_code_for(MissingProgramError("x")) == 2);
  CHECK(exit_code_for(CapacityError("x")) == 3);
  CHECK(exit_code_for(BudgetError("x")) == 3);
  CHECK(exit_code_for(OptimizationError("x")) == 4);
}

TEST_CASE("command-line lists") {
  CHECK(parse_grid("0.1, 0.5,0.9") == std::vector<double>{0.1, 0.5, 0.9});
  CHECK_THROWS_AS(parse_grid("0.1,,0.2"), ValidationError);
  CHECK_THROWS_AS(parse_grid("abc"), ValidationError);
  CHECK(parse_models("all").size() == 6);
  CHECK(parse_models("mdl,step-cost,mdl") == std::vector<ModelKind>{ModelKind::MDL, ModelKind::StepCost});
  CHECK_THROWS_AS(parse_models("mdl,foo"), ValidationError);
  PipelineConfig cfg;
  cfg.pend_grid = {0.5, 1.0};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.pend_grid = {0.5};
  cfg.models.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(log_level_from_string("DEBUG") == LogLevel::Debug);
  CHECK(!log_level_from_string("loud"));
}

TEST_CASE("logger filters by level") {
  std::ostringstream os;
  Logger log(os, LogLevel::Warn);
  log.info("hidden");
  log.warn("shown");
  CHECK(os.str() == "[warn] shown\n");
}

TEST_CASE("fit report round trip") {
  FitResult gi;
  gi.model = default_model(ModelKind::GrammarInduction);
  gi.model.beta_grammar = 0.25;
  gi.model.grammar = GrammarParams{3.5, 0.125, 0.3};
  gi.p_end_mode = 0.3;
  gi.k = 3;
  FitResult sc;
  sc.model = default_model(ModelKind::MDLStepCost);
  sc.model.beta_mdl = 0.75;
  sc.k = 2;
  const auto specs = parse_fit_report(fit_report_csv({gi, sc}));
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].kind == ModelKind::GrammarInduction);
  CHECK(specs[0].beta_grammar == 0.25);
  CHECK(specs[0].grammar->alpha == 3.5);
  CHECK(specs[0].grammar->p_call == 0.125);
  CHECK(specs[0].grammar->p_end == 0.3);
  CHECK(specs[1].beta_mdl == 0.75);
  CHECK(specs[1].beta_step_cost == 1);
  CHECK_THROWS_AS(parse_fit_report("h\nfoo,0,0,0,\n"), ParseError);
  CHECK_THROWS_AS(parse_fit_report("h\nmdl,0,0,1,alpha=2\n"), ParseError);
}

TEST_CASE("atomic writes and task lookup") {
  TempDir dir;
  const fs::path f = dir.path / "a" / "b.txt";
  write_file_atomic(f, "one");
  write_file_atomic(f, "two");
  CHECK(read_file(f) == "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(f.parent_path())) ++files;
  CHECK(files == 1);

  const PipelineConfig cfg = config_in(dir);
  write_file_atomic(cfg.task_dir / "broken.json", "{");
  std::vector<TaskLoadFailure> failures;
  const auto tasks = load_task_dir(cfg.task_dir, &failures);
  CHECK(tasks.size() == 2);
  REQUIRE(failures.size() == 1);
  CHECK(failures[0].file.filename() == "broken.json");
  try {
    find_task(tasks, "nope");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("square, two-cell") != std::string::npos);
  }
}

TEST_CASE("pipeline stages hand off through files") {
  TempDir dir;
  PipelineConfig cfg = config_in(dir);
  std::ostringstream logs;
  Logger log(logs, LogLevel::Debug);

  const StageResult s = run_search(cfg, log);
  CHECK(s.exit_code == 0);
  CHECK(s.tasks.size() == 2);
  const TraceFile two = read_trace_file(read_file(trace_path(cfg, "two-cell")));
  REQUIRE(!two.traces.traces.empty());
  CHECK(trace_to_string(two.traces.traces[0]) == "walk light");
  CHECK(logs.str().find("task two-cell: " + std::to_string(two.traces.traces.size()) + " traces") !=
        std::string::npos);

  // A dataset with one generated and one ungenerated program.
  Dataset d;
  const Program detour = parse_program(
      "main: walk light right walk light right walk left left walk right right walk light");
  d.records.push_back({"a", "square", detour, std::nullopt, std::nullopt});
  d.records.push_back({"b", "two-cell", parse_program("main: walk light"), std::nullopt, std::nullopt});
  d.records.push_back({"c", "square", detour, std::nullopt, std::nullopt});
  cfg.data_file = dir.path / "data.jsonl";
  write_file_atomic(cfg.data_file, write_dataset(d));

  // Without the dataset in the corpus stage, fitting names the missing record.
  CHECK(run_corpus(PipelineConfig(cfg), log).exit_code == 0);
  {
    PipelineConfig no_data = cfg;
    no_data.data_file.clear();
    run_corpus(no_data, log);
    try {
      run_fit(cfg, log);
      FAIL("expected a missing program");
    } catch (const MissingProgramError& e) {
      CHECK(std::string(e.what()).find("participant 'a'") != std::string::npos);
    }
  }

  logs.str("");
  CHECK(run_corpus(cfg, log).exit_code == 0);
  CHECK(logs.str().find("task square: 1 distinct dataset programs, 0 generated (0.0%), 1 unioned") !=
        std::string::npos);
  CHECK(logs.str().find("task two-cell: 1 distinct dataset programs, 1 generated (100.0%), 0 unioned") !=
        std::string::npos);
  const std::string corpus_text = read_file(corpus_path(cfg, "square"));
  CHECK(corpus_text.find("observed") != std::string::npos);

  cfg.models = {ModelKind::RandomChoice, ModelKind::StepCost, ModelKind::GrammarInduction};
  const StageResult f = run_fit(cfg, log);
  CHECK(f.exit_code == 0);
  const std::string report = read_file(cfg.out_dir / "fit_report.csv");
  CHECK(report.rfind("model,loglik,bic,k,parameters\nrandom,", 0) == 0);
  CHECK(fs::exists(cfg.out_dir / "task_bic.csv"));
  CHECK(read_file(cfg.out_dir / "variability.csv").find("square,2,1,2,1,") != std::string::npos);

  // Rerunning reproduces every file byte for byte.
  std::map<fs::path, std::string> before;
  for (const auto& e : fs::recursive_directory_iterator(cfg.out_dir)) {
    if (e.is_regular_file()) before[e.path()] = read_file(e.path());
  }
  cfg.jobs = 2;
  run_search(cfg, log);
  run_corpus(cfg, log);
  run_fit(cfg, log);
  for (const auto& [p, text] : before) CHECK(read_file(p) == text);

  CHECK(run_score(cfg, log).exit_code == 0);
  const std::string scores = read_file(cfg.out_dir / "scores" / "square.csv");
  CHECK(scores.rfind("task,program_hash,length,steps,random_logscore,random_posterior,", 0) == 0);

  const Dataset sim = run_simulate(cfg, default_model(ModelKind::StepCost), 20, log);
  CHECK(sim.records.size() == 20);
  CHECK(write_dataset(sim) == write_dataset(run_simulate(cfg, default_model(ModelKind::StepCost), 20, log)));
}
