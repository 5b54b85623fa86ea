#pragma once

// Program priors (step cost, description length, grammar induction), the
// grammar-induction sampler, and posteriors over a task's corpus.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hiplan/generate.hpp"
#include "hiplan/program.hpp"
#include "hiplan/task.hpp"

namespace hiplan {

struct GrammarParams {
  double alpha = 1.0;
  double p_call = 0.5;
  double p_end = 0.1;

  // Throws DomainError unless alpha > 0 and both probabilities are in (0, 1).
  void validate() const;
};

enum class ModelKind {
  RandomChoice,
  StepCost,
  MDL,
  GrammarInduction,
  MDLStepCost,
  GrammarInductionStepCost,
};
inline constexpr ModelKind kAllModelKinds[] = {
    ModelKind::RandomChoice,     ModelKind::StepCost,    ModelKind::MDL,
    ModelKind::GrammarInduction, ModelKind::MDLStepCost, ModelKind::GrammarInductionStepCost,
};

std::string_view to_string(ModelKind k);
// Accepts the names printed by to_string ("random", "step-cost", "mdl",
// "grammar", "mdl+step-cost", "grammar+step-cost").
std::optional<ModelKind> model_kind_from_string(std::string_view s);

bool uses_step_cost(ModelKind k);
bool uses_mdl(ModelKind k);
bool uses_grammar(ModelKind k);

struct ModelSpec {
  ModelKind kind = ModelKind::RandomChoice;
  double beta_step_cost = 0;
  double beta_mdl = 0;
  double beta_grammar = 0;
  std::optional<GrammarParams> grammar;

  // Throws DomainError on negative weights or a grammar mismatch.
  void validate() const;
};

// -steps. Throws NotSolvedError unless p solves the task.
double step_cost_logprior(const Program& p, const Task& task);
// -program length.
double mdl_logprior(const Program& p);

struct DpChoice {
  bool is_new = true;
  int k = 0;  // subroutine reused when !is_new

  static DpChoice fresh() { return {true, 0}; }
  static DpChoice reuse(int k) { return {false, k}; }
};

// log probability of the next call under the Dirichlet process:
// New -> alpha/(n+alpha), Reuse(k) -> counts[k]/(n+alpha). counts is indexed
// by subroutine. Throws DomainError for reuse of an unseen subroutine.
double dp_call_logprob(const std::vector<int>& counts, int n, DpChoice choice, double alpha);

// Exact log probability that the sampler generates p. Bodies are expanded on
// first call; call counts are shared across the whole program and a new
// subroutine is counted before its own body is scored. Throws
// UncalledSubroutineError for subroutines never called from main and
// StructureError for empty bodies that are called (or an empty main).
double grammar_logprior(const Program& p, const GrammarParams& g);

// Sufficient statistics of grammar_logprior: the log prior is a closed form
// of these counts.
struct GrammarFeatures {
  int bodies = 0;
  int total_length = 0;
  int actions = 0;
  int calls = 0;
  int distinct_callees = 0;
  // sum over callees of log((uses - 1)!)
  double log_reuse_factorials = 0;
};
GrammarFeatures grammar_features(const Program& p);
double grammar_logprior(const GrammarFeatures& f, const GrammarParams& g);

struct SamplerLimits {
  std::size_t max_instructions = 10'000;
};

// Draws a program by the generative process. Subroutines are numbered in
// order of definition and may exceed four. Throws BudgetError when the
// program grows past max_instructions.
Program sample_program(const GrammarParams& g, std::mt19937_64& rng, const SamplerLimits& limits = {});
Program sample_program(const GrammarParams& g, std::uint64_t seed, const SamplerLimits& limits = {});

struct ProgramFeatures {
  int steps = 0;
  int length = 0;
  GrammarFeatures grammar;
};
ProgramFeatures program_features(const Program& p, const Task& task);

double model_logscore(const ProgramFeatures& f, const ModelSpec& m);
double model_logscore(const Program& p, const Task& task, const ModelSpec& m);

struct PosteriorTable {
  std::vector<double> log_scores;
  double log_normalizer = 0;
  std::vector<double> probabilities;
};

// Softmax of model scores over the corpus. Throws EmptyCorpusError.
PosteriorTable posterior_over_corpus(const Corpus& corpus, const ModelSpec& m);
PosteriorTable posterior_over_features(const std::vector<ProgramFeatures>& features, const ModelSpec& m);

// 16 hex digits of FNV-1a over the program's DSL text.
std::string program_hash(const Program& p);

struct NamedModel {
  std::string name;
  ModelSpec spec;
};
// CSV with columns task, program_hash, length, steps, then <name>_logscore
// and <name>_posterior for each model.
std::string score_csv(const Corpus& corpus, const std::vector<NamedModel>& models);

}  // namespace hiplan
