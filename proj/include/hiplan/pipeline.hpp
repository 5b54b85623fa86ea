#pragma once

// Stage orchestration behind the command-line tool: search -> corpus -> fit,
// plus scoring, rendering, canonicalization and simulation helpers. Every
// stage reads and writes files under an output directory so stages can be
// rerun independently.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hiplan/fitting.hpp"
#include "hiplan/priors.hpp"
#include "hiplan/task.hpp"

namespace hiplan {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kValidation = 2;
inline constexpr int kCapacity = 3;
inline constexpr int kFit = 4;
}  // namespace exit_code

// Parse/validation/structure errors -> 2, capacity and budget -> 3,
// optimization -> 4. Anything else is treated as a validation error.
int exit_code_for(const std::exception& e);

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Parses "error", "warn", "info" or "debug" (case-insensitive).
std::optional<LogLevel> log_level_from_string(std::string_view s);

class Logger {
 public:
  explicit Logger(std::ostream& out, LogLevel level = LogLevel::Info);
  // Level from HIPLAN_LOG; unset or unrecognized values give Info.
  static Logger from_env(std::ostream& out);

  void log(LogLevel level, const std::string& msg);
  void error(const std::string& msg) { log(LogLevel::Error, msg); }
  void warn(const std::string& msg) { log(LogLevel::Warn, msg); }
  void info(const std::string& msg) { log(LogLevel::Info, msg); }
  void debug(const std::string& msg) { log(LogLevel::Debug, msg); }
  LogLevel level() const { return level_; }

 private:
  std::ostream* out_;
  LogLevel level_;
  std::mutex mu_;
};

struct PipelineConfig {
  std::filesystem::path task_dir;
  std::filesystem::path data_file;  // empty when no dataset is given
  std::filesystem::path out_dir;
  std::size_t min_traces = 1000;
  int max_subroutines = 4;
  std::vector<double> pend_grid = kDefaultPEndGrid;
  int restarts = 51;
  std::uint64_t seed = 0;
  std::vector<ModelKind> models = {std::begin(kAllModelKinds), std::end(kAllModelKinds)};
  int jobs = 1;
  // restrict to these task ids (all tasks when empty)
  std::vector<std::string> only_tasks;

  // Throws ValidationError on a bad grid, empty model list or jobs < 1.
  void validate() const;
};

// Comma-separated lists as given on the command line.
std::vector<double> parse_grid(std::string_view text);
std::vector<ModelKind> parse_models(std::string_view text);

// Writes to a temporary sibling and renames it over `path`, creating parent
// directories as needed.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

struct TaskLoadFailure {
  std::filesystem::path file;
  std::string message;
};

// Loads every *.json file in `dir` (sorted by file name), keyed by task id.
// Files that fail to load are reported in `failures` and skipped; duplicate
// ids are failures too.
std::map<std::string, Task> load_task_dir(const std::filesystem::path& dir,
                                          std::vector<TaskLoadFailure>* failures = nullptr);

// Throws ValidationError naming the known ids when `id` is absent.
const Task& find_task(const std::map<std::string, Task>& tasks, const std::string& id);

std::filesystem::path trace_path(const PipelineConfig& cfg, const std::string& task_id);
std::filesystem::path corpus_path(const PipelineConfig& cfg, const std::string& task_id);

struct TaskOutcome {
  std::string task_id;
  int exit_code = exit_code::kOk;
  std::string message;
};

struct StageResult {
  std::vector<TaskOutcome> tasks;
  // first nonzero task exit code in task order, or a stage-level failure
  int exit_code = exit_code::kOk;
};

// Per task: heuristic, top-m search, trace file. A failing task does not
// stop the others.
StageResult run_search(const PipelineConfig& cfg, Logger& log);

// Per task: trace file -> corpus file. With a dataset, its programs are
// canonicalized and unioned into their task's corpus and the coverage before
// union is logged.
StageResult run_corpus(const PipelineConfig& cfg, Logger& log);

// Fits every requested model against the dataset using the corpus files and
// writes fit_report.csv, task_bic.csv and variability.csv.
StageResult run_fit(const PipelineConfig& cfg, Logger& log);

// Model specs from a fit report (as written by fit_report_csv). Grammar rows
// take p_end from their "p_end=" field when present.
std::vector<ModelSpec> parse_fit_report(std::string_view csv);

// Default parameters used when no fit report is available: every weight 1,
// alpha 1, p_call 0.5, p_end 0.1.
ModelSpec default_model(ModelKind kind);

// Writes scores/<task>.csv for each task's corpus. Models come from
// out/fit_report.csv when it exists, otherwise from default_model.
StageResult run_score(const PipelineConfig& cfg, Logger& log);

// Draws a synthetic dataset from the model's posterior over the corpus files.
// Randomness comes from the stream "simulate".
Dataset run_simulate(const PipelineConfig& cfg, const ModelSpec& model, int draws, Logger& log);

}  // namespace hiplan
