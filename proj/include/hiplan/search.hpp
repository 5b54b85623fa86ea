#pragma once

// Shortest-path heuristic over the full state space and tie-exhaustive
// top-m A* search over action sequences.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiplan/task.hpp"

namespace hiplan {

using Trace = std::vector<Action>;

class HeuristicTable {
 public:
  static constexpr std::uint16_t kUnreachable = 0xFFFF;

  HeuristicTable(StateIndex index, std::vector<std::uint16_t> h)
      : index_(index), h_(std::move(h)) {}

  const StateIndex& index() const { return index_; }
  std::uint16_t at(const WorldState& s) const { return h_[index_.index(s)]; }
  std::uint16_t at(std::uint32_t i) const { return h_[i]; }
  std::size_t size() const { return h_.size(); }

 private:
  StateIndex index_;
  std::vector<std::uint16_t> h_;
};

// Exact number of state-changing actions from every state to the nearest
// goal (reverse breadth-first search from all goal states). The table keeps
// a pointer to `task`.
HeuristicTable compute_heuristic(const Task& task,
                                 std::uint64_t limit = StateIndex::kDefaultLimit);

// True iff appending `a` after `previous` (most recent last; only the last
// two entries matter) forms LLL, RRR, LR, RL, or a turn followed by Light.
bool is_redundant(std::span<const Action> previous, Action a);

struct SearchConfig {
  std::size_t min_traces = 1000;
  std::size_t max_expansions = 5'000'000;
};

struct TraceSet {
  // Sorted by (length, lexicographic action order).
  std::vector<Trace> traces;
  int max_cost = 0;
  // The frontier emptied before min_traces traces were found.
  bool exhausted = false;
  std::size_t expansions = 0;
};

// Best-first search with f = g + h over partial traces. Skips actions that do
// not change the state or that are redundant. Collects goal-reaching traces
// until at least min_traces are found and no frontier entry can tie the cost
// of the min_traces-th one. Throws CapacityError past max_expansions.
TraceSet search_traces(const Task& task, const HeuristicTable& h, const SearchConfig& cfg = {});

// "# task=<id> max_cost=<k> count=<n>" then one space-separated trace per line.
std::string write_trace_file(std::string_view task_id, const TraceSet& traces);
struct TraceFile {
  std::string task_id;
  TraceSet traces;
};
TraceFile read_trace_file(std::string_view text);

std::string trace_to_string(const Trace& t);

}  // namespace hiplan
