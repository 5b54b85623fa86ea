#pragma once

// Hierarchical program DSL: data model, text and JSON forms, goal-halting
// execution, and tree rendering.

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hiplan/task.hpp"

namespace hiplan {

// A primitive action or a call to subroutine k >= 1. Main (index 0) is never
// a call target.
class Instruction {
 public:
  static constexpr Instruction action(Action a) { return Instruction(static_cast<int>(a)); }
  static constexpr Instruction call(int k) { return Instruction(kNumActions - 1 + k); }

  constexpr bool is_call() const { return code_ >= kNumActions; }
  constexpr Action action() const { return static_cast<Action>(code_); }
  constexpr int callee() const { return code_ - kNumActions + 1; }

  // Orders actions Walk < Jump < Left < Right < Light, then calls p1 < p2 < ...
  friend constexpr auto operator<=>(Instruction, Instruction) = default;

 private:
  constexpr explicit Instruction(int code) : code_(static_cast<std::int16_t>(code)) {}
  std::int16_t code_;
};

using Body = std::vector<Instruction>;

Body to_body(const std::vector<Action>& actions);
std::string to_string(Instruction ins);

// Main plus numbered subroutines. body(0) is main; body(k) for k beyond the
// stored range is empty. Equality ignores trailing empty subroutines.
class Program {
 public:
  // Subroutine slots in the experiment's editor.
  static constexpr int kMaxSubroutines = 4;

  Program() : bodies_(1) {}
  explicit Program(Body main, std::vector<Body> subs = {});

  const Body& main() const { return bodies_.front(); }
  const Body& body(int k) const;
  // Grows the subroutine table as needed.
  Body& mutable_body(int k);

  // One past the highest index with a non-empty body (at least 1).
  int num_bodies() const;
  // Number of non-empty subroutines (main excluded).
  int num_defined_subroutines() const;

  friend bool operator==(const Program& a, const Program& b);

 private:
  std::vector<Body> bodies_;
};

// Total instruction count over every body; a call counts as one.
int program_length(const Program& p);

// ParseError on unknown tokens, a missing "main:" line, duplicate labels or
// call indices outside 1..max_subroutines.
Program parse_program(std::string_view text, int max_subroutines = Program::kMaxSubroutines);
// Canonical text; empty subroutines are omitted.
std::string serialize_program(const Program& p);

// {"main": [tokens], "p1": [tokens], ...}
Program program_from_json(const nlohmann::json& j);
nlohmann::json program_to_json(const Program& p);

struct Budget {
  std::int64_t max_steps = 10'000;
  int max_depth = 64;
};

enum class Outcome { Solved, NotSolved, NonHalting };
std::string_view to_string(Outcome o);

struct ExecutionResult {
  Outcome outcome = Outcome::NotSolved;
  std::vector<Action> trace;
  WorldState final_state;

  std::size_t steps() const { return trace.size(); }
  bool solved() const { return outcome == Outcome::Solved; }
};

// Hooks into execution. `body`/`pos` locate the instruction being run.
class ExecutionObserver {
 public:
  virtual ~ExecutionObserver() = default;
  virtual void on_action(int /*body*/, int /*pos*/, const WorldState& /*before*/,
                         const WorldState& /*after*/) {}
  virtual void on_call(int /*body*/, int /*pos*/, int /*callee*/) {}
  virtual void on_return(int /*callee*/) {}
};

ExecutionResult execute(const Task& task, const Program& p, Budget budget = {},
                        ExecutionObserver* observer = nullptr);

// Requires a solving program; throws NotSolvedError otherwise. Leaves are
// executed actions, internal nodes are calls. Edges below the first call to
// a subroutine are solid, later calls dashed.
std::string render_tree(const Program& p, const Task& task);

}  // namespace hiplan
