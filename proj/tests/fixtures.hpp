#pragma once

// Small hand-made tasks shared across the unit tests.

#include <string>
#include <vector>

#include "hiplan/program.hpp"
#include "hiplan/task.hpp"

namespace hiplan::testing {

// (0,0) -> (1,0), light on (1,0), start facing east.
inline Task two_cell_task() {
  return Task("two-cell", {{0, 0, 0, false}, {1, 0, 0, true}}, Pose{0, 0, Dir::E});
}

// 4x3 flat grid walked in an S: lights at the row ends (3,0), (0,1), (3,2).
inline Task s_shape_task() {
  std::vector<Cell> cells;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      const bool light = (y == 0 && x == 3) || (y == 1 && x == 0) || (y == 2 && x == 3);
      cells.push_back({x, y, 0, light});
    }
  }
  return Task("s-shape", std::move(cells), Pose{0, 0, Dir::E});
}

// The tree program from the S-shape example: a 4-instruction subroutine used
// three times.
inline Program s_shape_program() {
  return parse_program(
      "main: p1 right walk right p1 left walk left p1\n"
      "p1: walk walk walk light\n");
}

// Square loop: walk/light/turn three times.
//   start (0,0) E; lights at (1,0), (1,1), (0,1).
inline Task square_task() {
  return Task("square", {{0, 0, 0, false}, {1, 0, 0, true}, {1, 1, 0, true}, {0, 1, 0, true}},
              Pose{0, 0, Dir::E});
}

// A row of `n` flat cells, lights at the listed x positions, start (0,0) E.
inline Task row_task(int n, const std::vector<int>& light_xs, std::string id = "row") {
  std::vector<Cell> cells;
  for (int x = 0; x < n; ++x) {
    bool light = false;
    for (int lx : light_xs) light = light || lx == x;
    cells.push_back({x, 0, 0, light});
  }
  return Task(std::move(id), std::move(cells), Pose{0, 0, Dir::E});
}

inline std::vector<Action> actions(const std::string& text) {
  std::vector<Action> out;
  const Program p = parse_program("main: " + text);
  for (Instruction ins : p.main()) out.push_back(ins.action());
  return out;
}

}  // namespace hiplan::testing
