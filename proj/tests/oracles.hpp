#pragma once

// Brute-force reference implementations used to check the optimized modules.

#include <algorithm>
#include <functional>
#include <vector>

#include "hiplan/task.hpp"

namespace hiplan::testing {

// Pattern check written against the full string, independent of
// is_redundant's two-action window.
inline bool has_banned_pattern(const std::vector<Action>& s) {
  const auto n = s.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Action a = s[i], b = s[i + 1];
    if ((a == Action::Left && b == Action::Right) || (a == Action::Right && b == Action::Left)) {
      return true;
    }
    if ((a == Action::Left || a == Action::Right) && b == Action::Light) return true;
    if (i + 2 < n && a == b && b == s[i + 2] && (a == Action::Left || a == Action::Right)) {
      return true;
    }
  }
  return false;
}

// Every action string of length <= max_len that reaches the goal on its last
// action, never repeats a state across one action, and has no banned pattern.
// Sorted by (length, lexicographic).
inline std::vector<std::vector<Action>> brute_force_traces(const Task& task, int max_len) {
  std::vector<std::vector<Action>> out;
  std::vector<Action> cur;
  auto dfs = [&](auto&& self, const WorldState& s) -> void {
    if (static_cast<int>(cur.size()) == max_len) return;
    for (Action a : kAllActions) {
      const WorldState next = apply_action(task, s, a);
      if (next == s) continue;
      cur.push_back(a);
      if (!has_banned_pattern(cur)) {
        if (is_goal(task, next)) {
          out.push_back(cur);
        } else {
          self(self, next);
        }
      }
      cur.pop_back();
    }
  };
  dfs(dfs, initial_state(task));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

// The set search_traces must return for min_traces = m, computed from an
// enumeration deep enough to contain the m-th trace.
inline std::vector<std::vector<Action>> expected_trace_set(
    const std::vector<std::vector<Action>>& all, std::size_t m) {
  if (all.size() < m) return all;
  const std::size_t bound = all[m - 1].size();
  std::vector<std::vector<Action>> out;
  for (const auto& t : all) {
    if (t.size() <= bound) out.push_back(t);
  }
  return out;
}

}  // namespace hiplan::testing

#include <map>
#include <string>

#include "hiplan/program.hpp"

namespace hiplan::testing {

// Every program the generative process can emit with probability at least
// `threshold`, with its exact probability, found by walking the process's
// choice tree directly (bodies as explicit stacks; independent of the
// scorer's traversal). Keys are DSL text; subroutines are numbered in order
// of creation.
inline std::map<std::string, double> enumerate_grammar(double alpha, double p_end, double p_call,
                                                       double threshold) {
  struct State {
    std::vector<Body> bodies;
    std::vector<int> open;
    std::vector<int> counts;
    int n = 0;
    double p = 1;
  };
  std::map<std::string, double> out;
  auto record = [&](const State& s) {
    Program prog(s.bodies[0]);
    for (std::size_t k = 1; k < s.bodies.size(); ++k) {
      prog.mutable_body(static_cast<int>(k)) = s.bodies[k];
    }
    out[serialize_program(prog)] += s.p;
  };
  // next instruction for the innermost open body
  std::function<void(State)> instruction;
  // the innermost open body just received an instruction: stop or go on
  std::function<void(State)> after;
  instruction = [&](State s) {
    const int top = s.open.back();
    for (Action a : kAllActions) {
      State t = s;
      t.p *= (1 - p_call) / 5;
      if (t.p < threshold) continue;
      t.bodies[static_cast<std::size_t>(top)].push_back(Instruction::action(a));
      after(std::move(t));
    }
    for (std::size_t k = 1; k < s.counts.size(); ++k) {
      State t = s;
      t.p *= p_call * s.counts[k] / (s.n + alpha);
      if (t.p < threshold) continue;
      t.bodies[static_cast<std::size_t>(top)].push_back(Instruction::call(static_cast<int>(k)));
      ++t.counts[k];
      ++t.n;
      after(std::move(t));
    }
    State t = std::move(s);
    t.p *= p_call * alpha / (t.n + alpha);
    if (t.p < threshold) return;
    const int k = static_cast<int>(t.bodies.size());
    t.bodies[static_cast<std::size_t>(top)].push_back(Instruction::call(k));
    t.bodies.emplace_back();
    t.counts.push_back(1);
    ++t.n;
    t.open.push_back(k);
    instruction(std::move(t));
  };
  after = [&](State s) {
    State stop = s;
    stop.p *= p_end;
    if (stop.p >= threshold) {
      stop.open.pop_back();
      if (stop.open.empty()) {
        record(stop);
      } else {
        after(std::move(stop));
      }
    }
    s.p *= 1 - p_end;
    if (s.p >= threshold) instruction(std::move(s));
  };
  State root;
  root.bodies.emplace_back();
  root.open.push_back(0);
  root.counts.push_back(0);
  instruction(std::move(root));
  for (auto it = out.begin(); it != out.end();) {
    it = it->second < threshold ? out.erase(it) : std::next(it);
  }
  return out;
}

}  // namespace hiplan::testing
