#pragma once

// Maximum-likelihood fits of the priors to observed programs, BIC,
// likelihood-ratio tests, JS divergence and per-task variability.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hiplan/generate.hpp"
#include "hiplan/numeric.hpp"
#include "hiplan/priors.hpp"
#include "hiplan/task.hpp"

namespace hiplan {

struct Observation {
  std::string participant;
  std::string task;
  Program program;
  std::optional<double> rt_seconds;
  std::optional<int> n_evals;
};

struct Dataset {
  std::vector<Observation> records;
};

// One JSON object per line; blank lines are skipped. ParseError names the line.
Dataset parse_dataset(std::string_view jsonl);
Dataset load_dataset_file(const std::string& path);
std::string write_dataset(const Dataset& d);

inline const std::vector<double> kDefaultPEndGrid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

// Corpus programs sharing every prior-relevant feature get the same score
// under every model, so each task's corpus is stored as distinct feature
// tuples with multiplicities.
struct FeatureClass {
  ProgramFeatures features;
  double log_multiplicity = 0;
};

struct TaskLikelihood {
  std::string task_id;
  std::vector<FeatureClass> classes;
  // class of each corpus entry
  std::vector<std::size_t> entry_class;
  // (corpus entry, count) for every observed program
  std::vector<std::pair<std::size_t, int>> observed;
  int total = 0;
};

struct FitData {
  std::vector<TaskLikelihood> tasks;  // sorted by task id
  int n = 0;                          // total observations
};

TaskLikelihood task_likelihood(const Corpus& corpus,
                               const std::vector<std::pair<std::size_t, int>>& observed);

struct UnionStats {
  std::size_t records = 0;
  std::size_t distinct = 0;   // distinct (task, canonical program) pairs
  std::size_t found = 0;      // of those, already in the generated corpus
  std::size_t unioned = 0;    // added to the corpus
  double coverage() const { return distinct ? static_cast<double>(found) / static_cast<double>(distinct) : 1.0; }
};

// Canonicalizes every observed program, unions missing ones into the task's
// corpus (when allow_union), and builds the likelihood data. Throws
// ValidationError for programs that do not solve their task and
// MissingProgramError for unknown tasks or, without union, programs absent
// from the corpus. Both name the offending record.
FitData prepare_fit_data(const Dataset& data, const std::map<std::string, Task>& tasks,
                         std::map<std::string, Corpus>& corpora, UnionStats* stats = nullptr,
                         bool allow_union = true);

struct LoglikDetail {
  double total = 0;
  // per task; for grammar models weighted by the posterior over the grid
  std::vector<double> per_task;
  // total log likelihood at each p_end grid value (grammar models only)
  std::vector<double> grid;
};

// Sum over observations of log posterior. Grammar models marginalize p_end:
// logsumexp over the grid of the total log likelihood, minus log(grid size).
// The p_end in m.grammar is ignored for them.
LoglikDetail dataset_loglik_detail(const FitData& data, const ModelSpec& m,
                                   const std::vector<double>& pend_grid = kDefaultPEndGrid);
double dataset_loglik(const FitData& data, const ModelSpec& m,
                      const std::vector<double>& pend_grid = kDefaultPEndGrid);

// Posterior over a task's feature classes (class mass, not per program).
std::vector<double> class_posterior(const TaskLikelihood& t, const ModelSpec& m);
// Same, for grammar models mixed over the grid with weights proportional to
// each grid value's total dataset likelihood.
std::vector<double> marginal_class_posterior(const FitData& data, std::size_t task,
                                             const ModelSpec& m,
                                             const std::vector<double>& pend_grid = kDefaultPEndGrid);

int parameter_count(ModelKind k);
std::vector<std::string> parameter_names(ModelKind k);

struct FitOptions {
  int restarts = 51;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::vector<double> pend_grid = kDefaultPEndGrid;
  NelderMeadOptions simplex;
};

struct FitResult {
  ModelSpec model;
  double loglik = 0;
  double bic = 0;
  int k = 0;
  int n = 0;
  int restarts_run = 0;
  int best_restart = -1;
  // p_end grid value with the highest likelihood (grammar models)
  std::optional<double> p_end_mode;
  std::vector<double> restart_logliks;
};

// Maximizes dataset_loglik over the model's free parameters with the simplex
// method in log/logit coordinates; restart 0 starts from the defaults, the
// rest from draws on stream "fit/restart/<i>". Throws OptimizationError when
// no restart yields a finite likelihood.
FitResult fit_model(ModelKind kind, const FitData& data, const FitOptions& opt = {});

double bic(double loglik, int k, int n);

struct LrTest {
  double stat = 0;
  double p = 1;
};
// stat = 2 (alt - null), clamped at 0; p is the chi-square upper tail.
LrTest lr_test(double loglik_null, double loglik_alt, int df);
double chi_square_upper_tail(double stat, int df);

// Natural-log JS divergence. Throws SupportMismatchError on differing sizes.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

struct TaskVariability {
  std::string task_id;
  int observations = 0;
  int unique_programs = 0;
  int modal_count = 0;
  double modal_share = 0;
  // JS divergence between the grammar and step-cost posteriors (when given)
  std::optional<double> js_grammar_step_cost;
};

std::vector<TaskVariability> variability_report(const FitData& data,
                                                const std::optional<ModelSpec>& grammar = std::nullopt,
                                                const std::optional<ModelSpec>& step_cost = std::nullopt,
                                                const std::vector<double>& pend_grid = kDefaultPEndGrid);

// Draws `draws` observations spread round-robin over tasks from the model's
// posterior over each corpus. Grammar models use m.grammar->p_end.
Dataset simulate_dataset(const std::map<std::string, Corpus>& corpora, const ModelSpec& m, int draws,
                         std::mt19937_64& rng);

// "model,loglik,bic,k,parameters" with parameters as space-separated
// name=value pairs. Grammar rows end with the p_end grid mode.
std::string fit_report_csv(const std::vector<FitResult>& fits);
// Rows per task (-2 log likelihood), plus marginalization residual and
// parameter-penalty rows, so each column sums to the model's BIC.
std::string task_bic_csv(const FitData& data, const std::vector<FitResult>& fits,
                         const std::vector<double>& pend_grid = kDefaultPEndGrid);
std::string variability_csv(const std::vector<TaskVariability>& rows);

std::string format_number(double v);

}  // namespace hiplan
