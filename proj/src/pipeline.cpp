#include "hiplan/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "hiplan/canonicalize.hpp"
#include "hiplan/error.hpp"
#include "hiplan/generate.hpp"
#include "hiplan/numeric.hpp"
#include "hiplan/search.hpp"

namespace fs = std::filesystem;

namespace hiplan {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CapacityError*>(&e) || dynamic_cast<const BudgetError*>(&e)) {
    return exit_code::kCapacity;
  }
  if (dynamic_cast<const OptimizationError*>(&e)) return exit_code::kFit;
  return exit_code::kValidation;
}

std::optional<LogLevel> log_level_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "error") return LogLevel::Error;
  if (lower == "warn" || lower == "warning") return LogLevel::Warn;
  if (lower == "info") return LogLevel::Info;
  if (lower == "debug") return LogLevel::Debug;
  return std::nullopt;
}

Logger::Logger(std::ostream& out, LogLevel level) : out_(&out), level_(level) {}

Logger Logger::from_env(std::ostream& out) {
  const char* env = std::getenv("HIPLAN_LOG");
  return Logger(out, env ? log_level_from_string(env).value_or(LogLevel::Info) : LogLevel::Info);
}

void Logger::log(LogLevel level, const std::string& msg) {
  if (level > level_) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu_);
  *out_ << '[' << names[static_cast<int>(level)] << "] " << msg << '\n';
}

void PipelineConfig::validate() const {
  if (pend_grid.empty()) throw ValidationError("p_end grid is empty");
  for (double p : pend_grid) {
    if (!(p > 0 && p < 1)) throw ValidationError("p_end grid value " + format_number(p) + " is outside (0, 1)");
  }
  if (models.empty()) throw ValidationError("no models requested");
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
  if (restarts < 1) throw ValidationError("restarts must be at least 1");
  if (min_traces < 1) throw ValidationError("min-traces must be at least 1");
  if (max_subroutines < 0 || max_subroutines > Program::kMaxSubroutines) {
    throw ValidationError("max-subroutines must lie in 0.." + std::to_string(Program::kMaxSubroutines));
  }
}

namespace {

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> out;
  for (const std::string& item : split_list(text)) {
    double v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw ValidationError("bad p_end grid value '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<ModelKind> parse_models(std::string_view text) {
  std::vector<ModelKind> out;
  for (const std::string& item : split_list(text)) {
    if (item == "all") {
      out.assign(std::begin(kAllModelKinds), std::end(kAllModelKinds));
      continue;
    }
    const auto k = model_kind_from_string(item);
    if (!k) {
      std::string known;
      for (ModelKind m : kAllModelKinds) known += (known.empty() ? "" : ", ") + std::string(to_string(m));
      throw ValidationError("unknown model '" + item + "' (known: " + known + ")");
    }
    if (std::find(out.begin(), out.end(), *k) == out.end()) out.push_back(*k);
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw ValidationError("cannot write '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, Task> load_task_dir(const fs::path& dir, std::vector<TaskLoadFailure>* failures) {
  if (!fs::is_directory(dir)) throw ValidationError("task directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, Task> tasks;
  for (const fs::path& f : files) {
    try {
      Task t = load_task(read_file(f));
      const std::string id = t.id();
      if (!tasks.emplace(id, std::move(t)).second) {
        throw ValidationError("duplicate task id '" + id + "'");
      }
    } catch (const Error& e) {
      if (failures) failures->push_back({f, e.what()});
    }
  }
  return tasks;
}

const Task& find_task(const std::map<std::string, Task>& tasks, const std::string& id) {
  const auto it = tasks.find(id);
  if (it != tasks.end()) return it->second;
  std::string known;
  for (const auto& [k, t] : tasks) known += (known.empty() ? "" : ", ") + k;
  throw ValidationError("unknown task '" + id + "' (known: " + (known.empty() ? "none" : known) + ")");
}

fs::path trace_path(const PipelineConfig& cfg, const std::string& task_id) {
  return cfg.out_dir / "traces" / (task_id + ".traces");
}

fs::path corpus_path(const PipelineConfig& cfg, const std::string& task_id) {
  return cfg.out_dir / "corpus" / (task_id + ".corpus");
}

namespace {

// Loads tasks, logs unreadable files, and applies the id filter. Load
// failures become validation outcomes.
std::map<std::string, Task> stage_tasks(const PipelineConfig& cfg, Logger& log, StageResult& result) {
  std::vector<TaskLoadFailure> failures;
  auto tasks = load_task_dir(cfg.task_dir, &failures);
  for (const auto& f : failures) {
    log.error(f.file.string() + ": " + f.message);
    result.tasks.push_back({f.file.filename().string(), exit_code::kValidation, f.message});
  }
  if (!cfg.only_tasks.empty()) {
    std::map<std::string, Task> chosen;
    for (const std::string& id : cfg.only_tasks) chosen.emplace(id, find_task(tasks, id));
    tasks = std::move(chosen);
  }
  if (tasks.empty() && failures.empty()) {
    throw ValidationError("no task files in '" + cfg.task_dir.string() + "'");
  }
  return tasks;
}

// Runs fn(task) for every task on up to cfg.jobs threads; exceptions become
// the task's outcome. Messages are logged in task order afterwards.
template <class Fn>
void for_each_task(const PipelineConfig& cfg, const std::map<std::string, Task>& tasks, Logger& log,
                   StageResult& result, Fn fn) {
  std::vector<const Task*> order;
  for (const auto& [id, t] : tasks) order.push_back(&t);
  std::vector<TaskOutcome> outcomes(order.size());
  std::vector<std::vector<std::pair<LogLevel, std::string>>> messages(order.size());
  auto work = [&](std::size_t i) {
    const Task& t = *order[i];
    outcomes[i].task_id = t.id();
    auto note = [&](LogLevel lvl, std::string msg) { messages[i].emplace_back(lvl, std::move(msg)); };
    try {
      fn(t, note);
    } catch (const std::exception& e) {
      outcomes[i].exit_code = exit_code_for(e);
      outcomes[i].message = e.what();
      note(LogLevel::Error, "task " + t.id() + ": " + e.what());
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(static_cast<std::size_t>(cfg.jobs), 1, std::max<std::size_t>(order.size(), 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < order.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < order.size(); i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const auto& [lvl, msg] : messages[i]) log.log(lvl, msg);
    result.tasks.push_back(std::move(outcomes[i]));
  }
}

void finish(StageResult& result) {
  for (const TaskOutcome& o : result.tasks) {
    if (o.exit_code != exit_code::kOk) {
      result.exit_code = o.exit_code;
      return;
    }
  }
}

std::string percent(std::size_t part, std::size_t whole) {
  if (whole == 0) return "100%";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * static_cast<double>(part) / static_cast<double>(whole));
  return buf;
}

using Note = std::function<void(LogLevel, std::string)>;

}  // namespace

StageResult run_search(const PipelineConfig& cfg, Logger& log) {
  cfg.validate();
  StageResult result;
  const auto tasks = stage_tasks(cfg, log, result);
  for_each_task(cfg, tasks, log, result, [&](const Task& t, const Note& note) {
    const HeuristicTable h = compute_heuristic(t);
    SearchConfig sc;
    sc.min_traces = cfg.min_traces;
    const TraceSet ts = search_traces(t, h, sc);
    write_file_atomic(trace_path(cfg, t.id()), write_trace_file(t.id(), ts));
    note(LogLevel::Info, "task " + t.id() + ": " + std::to_string(ts.traces.size()) + " traces, max_cost " +
                             std::to_string(ts.max_cost) + ", " + std::to_string(ts.expansions) +
                             " expansions");
    if (ts.exhausted) {
      note(LogLevel::Warn, "task " + t.id() + ": search space exhausted below " +
                               std::to_string(cfg.min_traces) + " traces");
    }
  });
  finish(result);
  return result;
}

StageResult run_corpus(const PipelineConfig& cfg, Logger& log) {
  cfg.validate();
  StageResult result;
  const auto tasks = stage_tasks(cfg, log, result);

  // Dataset programs grouped by task, keeping record numbers for messages.
  std::map<std::string, std::vector<std::pair<std::size_t, const Observation*>>> observed;
  Dataset data;
  if (!cfg.data_file.empty()) {
    data = load_dataset_file(cfg.data_file.string());
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      const Observation& o = data.records[i];
      if (!tasks.count(o.task)) {
        log.warn("dataset record " + std::to_string(i + 1) + " names task '" + o.task +
                 "' which is not being processed");
        continue;
      }
      observed[o.task].emplace_back(i, &o);
    }
  }

  for_each_task(cfg, tasks, log, result, [&](const Task& t, const Note& note) {
    const TraceFile tf = read_trace_file(read_file(trace_path(cfg, t.id())));
    if (tf.task_id != t.id()) {
      throw ValidationError("trace file for '" + t.id() + "' names task '" + tf.task_id + "'");
    }
    CorpusConfig cc;
    cc.max_subroutines = cfg.max_subroutines;
    CorpusStats stats;
    Corpus corpus = build_corpus(t, tf.traces, cc, &stats);
    note(LogLevel::Info, "task " + t.id() + ": " + std::to_string(corpus.size()) + " programs from " +
                             std::to_string(tf.traces.traces.size()) + " traces (" +
                             std::to_string(stats.generated) + " generated, " +
                             std::to_string(stats.generated - corpus.size()) + " duplicates)");
    const auto it = observed.find(t.id());
    if (it != observed.end()) {
      std::set<std::string> distinct;
      std::size_t found = 0;
      std::size_t unioned = 0;
      for (const auto& [record, o] : it->second) {
        try {
          const auto [idx, added] = union_observed(corpus, t, o->program);
          if (!distinct.insert(serialize_program(corpus.entries()[idx].program)).second) continue;
          if (added) {
            ++unioned;
          } else {
            ++found;
          }
        } catch (const Error& e) {
          throw ValidationError("dataset record " + std::to_string(record + 1) + " (participant '" +
                                o->participant + "'): " + e.what());
        }
      }
      corpus.sort();
      note(LogLevel::Info, "task " + t.id() + ": " + std::to_string(distinct.size()) +
                               " distinct dataset programs, " + std::to_string(found) +
                               " generated (" + percent(found, distinct.size()) + "), " +
                               std::to_string(unioned) + " unioned");
    }
    write_file_atomic(corpus_path(cfg, t.id()), write_corpus_file(corpus));
  });
  finish(result);
  return result;
}

namespace {

std::map<std::string, Corpus> load_corpora(const PipelineConfig& cfg, const std::map<std::string, Task>& tasks,
                                           Logger& log) {
  std::map<std::string, Corpus> corpora;
  for (const auto& [id, t] : tasks) {
    const fs::path p = corpus_path(cfg, id);
    if (!fs::exists(p)) {
      log.debug("no corpus file for task " + id);
      continue;
    }
    Corpus c = read_corpus_file(read_file(p));
    if (c.task_id() != id) throw ValidationError(p.string() + " names task '" + c.task_id() + "'");
    corpora.emplace(id, std::move(c));
  }
  return corpora;
}

}  // namespace

StageResult run_fit(const PipelineConfig& cfg, Logger& log) {
  cfg.validate();
  StageResult result;
  if (cfg.data_file.empty()) throw ValidationError("fit needs a dataset (--data)");
  const auto tasks = stage_tasks(cfg, log, result);
  auto corpora = load_corpora(cfg, tasks, log);
  const Dataset data = load_dataset_file(cfg.data_file.string());
  UnionStats us;
  FitData fd;
  try {
    fd = prepare_fit_data(data, tasks, corpora, &us, false);
  } catch (const MissingProgramError& e) {
    throw MissingProgramError(std::string(e.what()) +
                              "; rerun the corpus stage with this dataset to union observed programs");
  }
  log.info("dataset: " + std::to_string(us.records) + " records over " + std::to_string(fd.tasks.size()) +
           " tasks, " + std::to_string(us.distinct) + " distinct programs");

  FitOptions opt;
  opt.restarts = cfg.restarts;
  opt.seed = cfg.seed;
  opt.jobs = cfg.jobs;
  opt.pend_grid = cfg.pend_grid;
  std::vector<FitResult> fits;
  for (ModelKind k : cfg.models) {
    try {
      fits.push_back(fit_model(k, fd, opt));
      const FitResult& f = fits.back();
      log.info("fit " + std::string(to_string(k)) + ": loglik " + format_number(f.loglik) + ", BIC " +
               format_number(f.bic));
    } catch (const OptimizationError& e) {
      log.error("fit " + std::string(to_string(k)) + ": " + e.what());
      result.tasks.push_back({std::string(to_string(k)), exit_code::kFit, e.what()});
    }
  }
  write_file_atomic(cfg.out_dir / "fit_report.csv", fit_report_csv(fits));
  write_file_atomic(cfg.out_dir / "task_bic.csv", task_bic_csv(fd, fits, cfg.pend_grid));

  std::optional<ModelSpec> grammar;
  std::optional<ModelSpec> step_cost;
  for (const FitResult& f : fits) {
    if (f.model.kind == ModelKind::GrammarInduction) grammar = f.model;
    if (f.model.kind == ModelKind::StepCost) step_cost = f.model;
  }
  write_file_atomic(cfg.out_dir / "variability.csv",
                    variability_csv(variability_report(fd, grammar, step_cost, cfg.pend_grid)));
  finish(result);
  return result;
}

std::vector<ModelSpec> parse_fit_report(std::string_view csv) {
  std::vector<ModelSpec> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const std::string where = "fit report line " + std::to_string(line_no) + ": ";
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.empty()) throw ParseError(where + "empty row");
    const auto kind = model_kind_from_string(fields[0]);
    if (!kind) throw ParseError(where + "unknown model '" + fields[0] + "'");
    ModelSpec m;
    m.kind = *kind;
    if (uses_grammar(m.kind)) m.grammar = GrammarParams{};
    std::istringstream ps(fields.size() > 4 ? fields[4] : std::string());
    std::string pair;
    while (ps >> pair) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos) throw ParseError(where + "bad parameter '" + pair + "'");
      const std::string name = pair.substr(0, eq);
      double v = 0;
      const char* b = pair.data() + eq + 1;
      const char* e = pair.data() + pair.size();
      const auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc() || res.ptr != e) throw ParseError(where + "bad value in '" + pair + "'");
      if (name == "beta_StepCost") m.beta_step_cost = v;
      else if (name == "beta_MDL") m.beta_mdl = v;
      else if (name == "beta_GrammarInduction") m.beta_grammar = v;
      else if (name == "alpha" && m.grammar) m.grammar->alpha = v;
      else if (name == "p_call" && m.grammar) m.grammar->p_call = v;
      else if (name == "p_end" && m.grammar) m.grammar->p_end = v;
      else throw ParseError(where + "unexpected parameter '" + name + "'");
    }
    try {
      m.validate();
    } catch (const DomainError& e) {
      throw ParseError(where + e.what());
    }
    out.push_back(m);
  }
  return out;
}

ModelSpec default_model(ModelKind kind) {
  ModelSpec m;
  m.kind = kind;
  if (uses_step_cost(kind)) m.beta_step_cost = 1;
  if (uses_mdl(kind)) m.beta_mdl = 1;
  if (uses_grammar(kind)) {
    m.beta_grammar = 1;
    m.grammar = GrammarParams{};
  }
  return m;
}

StageResult run_score(const PipelineConfig& cfg, Logger& log) {
  cfg.validate();
  StageResult result;
  const auto tasks = stage_tasks(cfg, log, result);
  std::vector<NamedModel> models;
  const fs::path report = cfg.out_dir / "fit_report.csv";
  std::map<ModelKind, ModelSpec> fitted;
  if (fs::exists(report)) {
    for (const ModelSpec& m : parse_fit_report(read_file(report))) fitted[m.kind] = m;
    log.info("scoring with parameters from " + report.string());
  }
  for (ModelKind k : cfg.models) {
    const auto it = fitted.find(k);
    models.push_back({std::string(to_string(k)), it != fitted.end() ? it->second : default_model(k)});
  }
  for_each_task(cfg, tasks, log, result, [&](const Task& t, const Note& note) {
    const Corpus corpus = read_corpus_file(read_file(corpus_path(cfg, t.id())));
    write_file_atomic(cfg.out_dir / "scores" / (t.id() + ".csv"), score_csv(corpus, models));
    note(LogLevel::Info, "task " + t.id() + ": scored " + std::to_string(corpus.size()) + " programs");
  });
  finish(result);
  return result;
}

Dataset run_simulate(const PipelineConfig& cfg, const ModelSpec& model, int draws, Logger& log) {
  cfg.validate();
  model.validate();
  if (draws < 1) throw ValidationError("draws must be at least 1");
  StageResult ignored;
  const auto tasks = stage_tasks(cfg, log, ignored);
  const auto corpora = load_corpora(cfg, tasks, log);
  if (corpora.empty()) throw EmptyCorpusError("no corpus files under '" + cfg.out_dir.string() + "'");
  std::mt19937_64 rng = named_stream(cfg.seed, "simulate");
  Dataset d = simulate_dataset(corpora, model, draws, rng);
  log.info("simulated " + std::to_string(draws) + " observations over " + std::to_string(corpora.size()) +
           " tasks");
  return d;
}

}  // namespace hiplan
