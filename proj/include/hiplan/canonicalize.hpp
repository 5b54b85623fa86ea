#pragma once

// Seven normalization passes that bring participant programs into the same
// canonical form as generated corpus programs.

#include <array>

#include "hiplan/program.hpp"
#include "hiplan/task.hpp"

namespace hiplan {

struct CanonReport {
  // modified[i] is true iff pass i+1 changed the program.
  std::array<bool, 7> modified{};
  int original_length = 0;
  int canonical_length = 0;

  bool any() const;
};

struct CanonResult {
  Program program;
  CanonReport report;
};

// Runs passes 1..7 in order, repeating the pipeline (at most five rounds)
// until a round makes no change, so canonicalize(canonicalize(p)) == p.
// Throws NotSolvedError unless p solves the task.
CanonResult canonicalize(const Task& task, const Program& p);

// True iff both programs solve the task and end in the same state. Throws
// NotSolvedError when either does not solve it.
bool trace_equivalent(const Task& task, const Program& p, const Program& q);

namespace canon {

// 1. Replace every run that matches a defined subroutine body with a call,
//    scanning left to right and trying longer bodies first. Inside a
//    subroutine only strictly shorter subroutines are used, so no new call
//    cycles appear.
Program maximize_reuse(const Program& p);
// 2. Drop actions that never change the state, instructions that never run,
//    and calls to subroutines left empty.
Program remove_ineffective(const Task& task, const Program& p);
// 3. Clear subroutines unreachable from main.
Program remove_uncalled(const Program& p);
// 4. Inline subroutines with exactly one call site.
Program inline_single_call(const Program& p);
// 5. Inline subroutines whose body is one instruction.
Program inline_single_instruction(const Program& p);
// 6. Rewrite (turn, light) pairs to (light, turn) within each body.
Program order_turns_and_lights(const Program& p);
// 7. Renumber subroutines in order of first execution.
Program renumber_by_execution(const Task& task, const Program& p);

// Renumbers by first use in a depth-first walk from main. Matches
// renumber_by_execution whenever every call is reached before the goal.
Program renumber_by_first_use(const Program& p);

// Static call-site count for each subroutine index over bodies reachable
// from main; element 0 is unused.
std::vector<int> call_sites(const Program& p);

}  // namespace canon

}  // namespace hiplan
