#pragma once

// Lightbot tasks as deterministic MDPs: grid geometry, agent state,
// transitions and goal test.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hiplan {

enum class Dir : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

// Enumeration order doubles as the lexicographic order used for tie-breaking
// traces and candidate subroutines.
enum class Action : std::uint8_t { Walk = 0, Jump = 1, Left = 2, Right = 3, Light = 4 };

inline constexpr std::array<Action, 5> kAllActions = {Action::Walk, Action::Jump, Action::Left,
                                                      Action::Right, Action::Light};
inline constexpr int kNumActions = 5;

std::string_view to_string(Action a);
std::string_view to_string(Dir d);
std::optional<Action> action_from_token(std::string_view token);
std::optional<Dir> dir_from_token(std::string_view token);

inline bool is_turn(Action a) { return a == Action::Left || a == Action::Right; }

struct Cell {
  int x = 0;
  int y = 0;
  int height = 0;
  bool light = false;
};

struct Pose {
  int x = 0;
  int y = 0;
  Dir dir = Dir::E;
};

struct WorldState {
  int x = 0;
  int y = 0;
  Dir dir = Dir::E;
  std::uint32_t lit = 0;  // bit i set = i-th light (in (y, x) order) activated

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

class Task {
 public:
  // Largest light count a Task can represent (one bit per light in
  // WorldState::lit). enumerate_states() applies the tighter kMaxEnumLights.
  static constexpr int kMaxLights = 32;

  // Throws ValidationError when the invariants fail.
  Task(std::string id, std::vector<Cell> cells, Pose start);

  const std::string& id() const { return id_; }
  // Cells sorted by (y, x).
  const std::vector<Cell>& cells() const { return cells_; }
  const Pose& start() const { return start_; }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  int num_lights() const { return num_lights_; }
  std::uint32_t all_lit_mask() const;

  // Dense index into cells(), or -1 when (x, y) is not on the grid.
  int cell_index(int x, int y) const;
  // Light bit for the cell, or -1 when it is not a light.
  int light_index(int cell) const { return light_of_cell_[static_cast<std::size_t>(cell)]; }

 private:
  std::string id_;
  std::vector<Cell> cells_;
  Pose start_;
  int num_lights_ = 0;
  int min_x_ = 0;
  int min_y_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<int> grid_;  // bounding box -> cell index or -1
  std::vector<int> light_of_cell_;
};

// Parses the JSON task format. ParseError on malformed input, ValidationError
// on invariant violations.
Task load_task(std::string_view text);
Task load_task_file(const std::string& path);
std::string task_to_json(const Task& task);

WorldState initial_state(const Task& task);
WorldState apply_action(const Task& task, const WorldState& s, Action a);
bool is_goal(const Task& task, const WorldState& s);

// Dense bijection between world states and 0..size()-1.
class StateIndex {
 public:
  static constexpr int kMaxEnumLights = 16;
  static constexpr std::uint64_t kDefaultLimit = std::uint64_t{1} << 24;

  StateIndex(const Task& task, std::uint64_t limit = kDefaultLimit);

  std::uint64_t size() const { return size_; }
  std::uint32_t index(const WorldState& s) const;
  WorldState state(std::uint32_t index) const;

 private:
  const Task* task_;
  int num_lights_;
  std::uint64_t size_;
};

// Throws CapacityError when the task has more than kMaxEnumLights lights or
// the state count exceeds `limit`.
StateIndex enumerate_states(const Task& task, std::uint64_t limit = StateIndex::kDefaultLimit);

}  // namespace hiplan
