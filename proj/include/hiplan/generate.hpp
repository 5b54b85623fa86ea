#pragma once

// Expands searched traces into hierarchical programs: repeated-substring
// subroutines, greedy rewriting over subroutine combinations, self-recursive
// variants and variants that run past the goal.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiplan/program.hpp"
#include "hiplan/search.hpp"
#include "hiplan/task.hpp"

namespace hiplan {

struct CandidateSub {
  std::vector<Action> body;
  int first_pos = 0;

  friend bool operator==(const CandidateSub&, const CandidateSub&) = default;
};

// Number of non-overlapping occurrences of `pattern` in `seq`, counted greedily
// left to right.
int count_nonoverlapping(const std::vector<Action>& seq, const std::vector<Action>& pattern);

// Distinct substrings of length >= 2 with at least two non-overlapping
// occurrences, sorted by (length desc, first_pos asc, body).
std::vector<CandidateSub> candidate_subroutines(const Trace& trace);

// Rewrites `trace` using each chosen subroutine in turn (caller passes them in
// candidate order). Every match in every existing body becomes a call, so
// later (shorter) subroutines can nest inside earlier ones. Returns nullopt
// when a chosen subroutine is left with fewer than two call sites or more than
// four would be needed. Subroutines are numbered by first use.
std::optional<Program> rewrite_with(const Trace& trace, const std::vector<CandidateSub>& chosen);

// main = trace[0..k) + [p1], p1 = period + [p1] for every suffix start k and
// every period of that suffix (the last repetition may be partial). Only
// programs that solve the task with the trace's final state are kept.
std::vector<Program> recursive_variants(const Trace& trace, const Task& task);

// Programs whose last call to a candidate subroutine is cut short by the goal:
// when a proper prefix of a candidate's body ends the trace, the trace is
// completed to the full body and rewritten with that candidate. Recursive
// variants of the completed traces are included.
std::vector<Program> postgoal_variants(const Trace& trace, const std::vector<CandidateSub>& candidates,
                                       const Task& task);

enum class Origin { Flat, Rewrite, Recursive, PostGoal, Observed };
std::string_view to_string(Origin o);

struct CorpusEntry {
  Program program;
  int length = 0;
  int steps = 0;
  Origin origin = Origin::Flat;
  // Index of the first trace that produced the program; -1 when observed.
  int trace_index = -1;
};

class Corpus {
 public:
  explicit Corpus(std::string task_id = {}) : task_id_(std::move(task_id)) {}

  const std::string& task_id() const { return task_id_; }
  const std::vector<CorpusEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Inserts a canonical program unless an identical one is present. Returns
  // the entry index and whether it was added.
  std::pair<std::size_t, bool> add(CorpusEntry e);
  // Index of a canonical program, or nullopt.
  std::optional<std::size_t> find(const Program& canonical) const;

  // Orders entries by (length, steps, serialization).
  void sort();

 private:
  std::string task_id_;
  std::vector<CorpusEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct CorpusConfig {
  std::size_t max_programs_per_trace = 20'000;
  int max_subroutines = 4;
};

struct CorpusStats {
  std::size_t generated = 0;  // programs before deduplication
  std::size_t rejected = 0;   // subroutine subsets rejected by the rewriter
};

// Runs every generator on every trace, canonicalizes, deduplicates. Throws
// CapacityError when one trace yields more than max_programs_per_trace
// programs and EmptyCorpusError when there are no traces.
Corpus build_corpus(const Task& task, const TraceSet& traces, const CorpusConfig& cfg = {},
                    CorpusStats* stats = nullptr);

// Canonicalizes an observed program and adds it with Origin::Observed when
// missing. Returns its index and whether it was added.
std::pair<std::size_t, bool> union_observed(Corpus& corpus, const Task& task, const Program& p);

// "# task=<id> n=<count>", then per program "## length=<L> steps=<S>"
// (followed by " observed" for unioned programs), the DSL text, and a blank
// line.
std::string write_corpus_file(const Corpus& corpus);
Corpus read_corpus_file(std::string_view text);

}  // namespace hiplan
