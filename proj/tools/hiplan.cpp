// hiplan: command-line front end for the search -> corpus -> fit pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "hiplan/canonicalize.hpp"
#include "hiplan/error.hpp"
#include "hiplan/pipeline.hpp"
#include "hiplan/priors.hpp"

namespace fs = std::filesystem;
using namespace hiplan;

namespace {

struct Options {
  std::string tasks;
  std::string data;
  std::string out = "out";
  std::size_t min_traces = 1000;
  int max_subroutines = 4;
  int restarts = 51;
  std::uint64_t seed = 0;
  std::string models = "all";
  int jobs = 1;
  std::string pend_grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::vector<std::string> only;

  // render / canon
  std::string task_id;
  std::string program_file;
  std::string output;

  // simulate / sample
  std::string model = "grammar";
  std::vector<std::string> params;
  int draws = 1000;
  int count = 10;
};

PipelineConfig make_config(const Options& o) {
  PipelineConfig cfg;
  cfg.task_dir = o.tasks;
  cfg.data_file = o.data;
  cfg.out_dir = o.out;
  cfg.min_traces = o.min_traces;
  cfg.max_subroutines = o.max_subroutines;
  cfg.restarts = o.restarts;
  cfg.seed = o.seed;
  cfg.models = parse_models(o.models);
  cfg.jobs = o.jobs;
  cfg.pend_grid = parse_grid(o.pend_grid);
  cfg.only_tasks = o.only;
  cfg.validate();
  return cfg;
}

// "name=value" overrides on top of default_model(kind).
ModelSpec model_from_params(const std::string& kind_name, const std::vector<std::string>& params) {
  const auto kinds = parse_models(kind_name);
  if (kinds.size() != 1) throw ValidationError("exactly one model is needed, got '" + kind_name + "'");
  std::string report = "model,loglik,bic,k,parameters\n" + std::string(to_string(kinds[0])) + ",0,0,0,";
  for (std::size_t i = 0; i < params.size(); ++i) report += (i ? " " : "") + params[i];
  std::vector<ModelSpec> parsed;
  try {
    parsed = parse_fit_report(report + "\n");
  } catch (const ParseError& e) {
    throw ValidationError(std::string("bad --param: ") + e.what());
  }
  ModelSpec m = default_model(kinds[0]);
  const ModelSpec& given = parsed.at(0);
  // parse_fit_report starts from zero weights; keep defaults for unset ones
  for (const std::string& p : params) {
    const std::string name = p.substr(0, p.find('='));
    if (name == "beta_StepCost") m.beta_step_cost = given.beta_step_cost;
    if (name == "beta_MDL") m.beta_mdl = given.beta_mdl;
    if (name == "beta_GrammarInduction") m.beta_grammar = given.beta_grammar;
    if (name == "alpha") m.grammar->alpha = given.grammar->alpha;
    if (name == "p_call") m.grammar->p_call = given.grammar->p_call;
    if (name == "p_end") m.grammar->p_end = given.grammar->p_end;
  }
  m.validate();
  return m;
}

void emit(const Options& o, const std::string& text) {
  if (o.output.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(o.output, text);
  }
}

Program load_program(const std::string& path) { return parse_program(read_file(path)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical plan induction in a Lightbot-style gridworld"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--tasks", o.tasks, "Directory of task JSON files")->required();
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--jobs", o.jobs, "Tasks processed in parallel")->capture_default_str();
    sub->add_option("--task", o.only, "Restrict to these task ids");
  };

  CLI::App* search = app.add_subcommand("search", "Top-m trace search per task");
  add_common(search);
  search->add_option("--min-traces", o.min_traces, "Traces kept per task (m)")->capture_default_str();

  CLI::App* corpus = app.add_subcommand("corpus", "Build program corpora from trace files");
  add_common(corpus);
  corpus->add_option("--data", o.data, "Dataset whose programs are unioned into the corpora");
  corpus->add_option("--max-subroutines", o.max_subroutines)->capture_default_str();

  CLI::App* fit = app.add_subcommand("fit", "Fit models to a dataset");
  add_common(fit);
  fit->add_option("--data", o.data, "Dataset (JSON lines)")->required();
  fit->add_option("--restarts", o.restarts)->capture_default_str();
  fit->add_option("--seed", o.seed)->capture_default_str();
  fit->add_option("--models", o.models, "Comma-separated model names or 'all'")->capture_default_str();
  fit->add_option("--pend-grid", o.pend_grid, "Comma-separated p_end grid")->capture_default_str();

  CLI::App* score = app.add_subcommand("score", "Score corpus programs under each model");
  add_common(score);
  score->add_option("--models", o.models)->capture_default_str();

  CLI::App* simulate = app.add_subcommand("simulate", "Draw a synthetic dataset from the corpora");
  add_common(simulate);
  simulate->add_option("--model", o.model)->capture_default_str();
  simulate->add_option("--param", o.params, "name=value (repeatable)");
  simulate->add_option("--draws", o.draws)->capture_default_str();
  simulate->add_option("--seed", o.seed)->capture_default_str();
  simulate->add_option("--output", o.output, "Dataset file (stdout when omitted)");

  CLI::App* render = app.add_subcommand("render", "DOT tree of a program");
  render->add_option("--tasks", o.tasks)->required();
  render->add_option("--task", o.task_id)->required();
  render->add_option("program", o.program_file, "Program file (DSL)")->required();
  render->add_option("--output", o.output, "DOT file (stdout when omitted)");

  CLI::App* canon = app.add_subcommand("canon", "Canonical form of a program");
  canon->add_option("--tasks", o.tasks)->required();
  canon->add_option("--task", o.task_id)->required();
  canon->add_option("program", o.program_file)->required();
  canon->add_option("--output", o.output);

  CLI::App* sample = app.add_subcommand("sample", "Programs drawn from the grammar prior");
  sample->add_option("--param", o.params, "alpha=, p_call=, p_end= (repeatable)");
  sample->add_option("--count", o.count)->capture_default_str();
  sample->add_option("--seed", o.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  Logger log = Logger::from_env(std::cerr);
  try {
    auto stage = [&](StageResult (*fn)(const PipelineConfig&, Logger&)) {
      const StageResult r = fn(make_config(o), log);
      return r.exit_code;
    };
    if (*search) return stage(run_search);
    if (*corpus) return stage(run_corpus);
    if (*fit) return stage(run_fit);
    if (*score) return stage(run_score);
    if (*simulate) {
      const PipelineConfig cfg = make_config(o);
      emit(o, write_dataset(run_simulate(cfg, model_from_params(o.model, o.params), o.draws, log)));
      return exit_code::kOk;
    }
    if (*render || *canon) {
      std::vector<TaskLoadFailure> failures;
      const auto tasks = load_task_dir(o.tasks, &failures);
      for (const auto& f : failures) log.warn(f.file.string() + ": " + f.message);
      const Task& task = find_task(tasks, o.task_id);
      const Program p = load_program(o.program_file);
      if (*render) {
        emit(o, render_tree(p, task));
      } else {
        const CanonResult c = canonicalize(task, p);
        std::string passes;
        for (std::size_t i = 0; i < c.report.modified.size(); ++i) {
          if (c.report.modified[i]) passes += (passes.empty() ? "" : ",") + std::to_string(i + 1);
        }
        emit(o, serialize_program(c.program));
        std::cerr << "length " << c.report.original_length << " -> " << c.report.canonical_length
                  << ", passes changed: " << (passes.empty() ? "none" : passes) << '\n';
      }
      return exit_code::kOk;
    }
    if (*sample) {
      const ModelSpec m = model_from_params("grammar", o.params);
      std::mt19937_64 rng = named_stream(o.seed, "sample");
      for (int i = 0; i < o.count; ++i) {
        std::cout << "# sample " << i << '\n' << serialize_program(sample_program(*m.grammar, rng)) << '\n';
      }
      return exit_code::kOk;
    }
  } catch (const std::exception& e) {
    log.error(e.what());
    return exit_code_for(e);
  }
  return exit_code::kOk;
}
