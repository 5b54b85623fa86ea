#include "hiplan/task.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "hiplan/error.hpp"

namespace hiplan {

namespace {

constexpr std::array<std::string_view, 5> kActionTokens = {"walk", "jump", "left", "right",
                                                           "light"};
constexpr std::array<std::string_view, 4> kDirTokens = {"N", "E", "S", "W"};

// x grows east, y grows south.
constexpr std::array<int, 4> kDx = {0, 1, 0, -1};
constexpr std::array<int, 4> kDy = {-1, 0, 1, 0};

Dir rotate(Dir d, int quarter_turns) {
  return static_cast<Dir>((static_cast<int>(d) + quarter_turns + 4) % 4);
}

}  // namespace

std::string_view to_string(Action a) { return kActionTokens[static_cast<std::size_t>(a)]; }
std::string_view to_string(Dir d) { return kDirTokens[static_cast<std::size_t>(d)]; }

std::optional<Action> action_from_token(std::string_view token) {
  for (std::size_t i = 0; i < kActionTokens.size(); ++i) {
    if (kActionTokens[i] == token) return static_cast<Action>(i);
  }
  return std::nullopt;
}

std::optional<Dir> dir_from_token(std::string_view token) {
  for (std::size_t i = 0; i < kDirTokens.size(); ++i) {
    if (kDirTokens[i] == token) return static_cast<Dir>(i);
  }
  return std::nullopt;
}

Task::Task(std::string id, std::vector<Cell> cells, Pose start)
    : id_(std::move(id)), cells_(std::move(cells)), start_(start) {
  if (cells_.empty()) throw ValidationError("task '" + id_ + "' has no cells");
  std::sort(cells_.begin(), cells_.end(), [](const Cell& a, const Cell& b) {
    return std::pair(a.y, a.x) < std::pair(b.y, b.x);
  });
  for (std::size_t i = 1; i < cells_.size(); ++i) {
    if (cells_[i].x == cells_[i - 1].x && cells_[i].y == cells_[i - 1].y) {
      throw ValidationError("task '" + id_ + "' has duplicate cell (" +
                            std::to_string(cells_[i].x) + "," + std::to_string(cells_[i].y) + ")");
    }
  }
  int max_x = cells_.front().x;
  int max_y = cells_.front().y;
  min_x_ = max_x;
  min_y_ = max_y;
  for (const Cell& c : cells_) {
    if (c.height < 0) throw ValidationError("task '" + id_ + "' has a negative cell height");
    min_x_ = std::min(min_x_, c.x);
    min_y_ = std::min(min_y_, c.y);
    max_x = std::max(max_x, c.x);
    max_y = std::max(max_y, c.y);
  }
  width_ = max_x - min_x_ + 1;
  height_ = max_y - min_y_ + 1;
  grid_.assign(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_), -1);
  light_of_cell_.assign(cells_.size(), -1);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const Cell& c = cells_[i];
    grid_[static_cast<std::size_t>((c.y - min_y_) * width_ + (c.x - min_x_))] =
        static_cast<int>(i);
    if (c.light) light_of_cell_[i] = num_lights_++;
  }
  if (num_lights_ == 0) throw ValidationError("task '" + id_ + "' has no light cells");
  if (num_lights_ > kMaxLights) {
    throw ValidationError("task '" + id_ + "' has more than " + std::to_string(kMaxLights) +
                          " lights");
  }
  if (cell_index(start_.x, start_.y) < 0) {
    throw ValidationError("task '" + id_ + "' start (" + std::to_string(start_.x) + "," +
                          std::to_string(start_.y) + ") is not a cell");
  }
}

std::uint32_t Task::all_lit_mask() const {
  return num_lights_ == 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << num_lights_) - 1;
}

int Task::cell_index(int x, int y) const {
  const int gx = x - min_x_;
  const int gy = y - min_y_;
  if (gx < 0 || gy < 0 || gx >= width_ || gy >= height_) return -1;
  return grid_[static_cast<std::size_t>(gy * width_ + gx)];
}

Task load_task(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("task file is not valid JSON: ") + e.what());
  }
  try {
    std::string id = j.at("id").get<std::string>();
    std::vector<Cell> cells;
    for (const auto& jc : j.at("cells")) {
      Cell c;
      c.x = jc.at("x").get<int>();
      c.y = jc.at("y").get<int>();
      c.height = jc.at("height").get<int>();
      c.light = jc.at("light").get<bool>();
      cells.push_back(c);
    }
    const auto& js = j.at("start");
    Pose start;
    start.x = js.at("x").get<int>();
    start.y = js.at("y").get<int>();
    auto dir = dir_from_token(js.at("dir").get<std::string>());
    if (!dir) throw ParseError("task '" + id + "': start.dir must be one of N, E, S, W");
    start.dir = *dir;
    return Task(std::move(id), std::move(cells), start);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed task: ") + e.what());
  }
}

Task load_task_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open task file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_task(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string task_to_json(const Task& task) {
  nlohmann::json j;
  j["id"] = task.id();
  j["cells"] = nlohmann::json::array();
  for (const Cell& c : task.cells()) {
    j["cells"].push_back({{"x", c.x}, {"y", c.y}, {"height", c.height}, {"light", c.light}});
  }
  j["start"] = {{"x", task.start().x},
                {"y", task.start().y},
                {"dir", std::string(to_string(task.start().dir))}};
  return j.dump(2) + "\n";
}

WorldState initial_state(const Task& task) {
  return WorldState{task.start().x, task.start().y, task.start().dir, 0};
}

bool is_goal(const Task& task, const WorldState& s) { return s.lit == task.all_lit_mask(); }

WorldState apply_action(const Task& task, const WorldState& s, Action a) {
  if (is_goal(task, s)) return s;
  WorldState next = s;
  switch (a) {
    case Action::Left:
      next.dir = rotate(s.dir, -1);
      break;
    case Action::Right:
      next.dir = rotate(s.dir, 1);
      break;
    case Action::Light: {
      const int light = task.light_index(task.cell_index(s.x, s.y));
      if (light >= 0) next.lit |= std::uint32_t{1} << light;
      break;
    }
    case Action::Walk:
    case Action::Jump: {
      const auto d = static_cast<std::size_t>(s.dir);
      const int tx = s.x + kDx[d];
      const int ty = s.y + kDy[d];
      const int target = task.cell_index(tx, ty);
      if (target < 0) break;
      const int h_here = task.cells()[static_cast<std::size_t>(task.cell_index(s.x, s.y))].height;
      const int h_there = task.cells()[static_cast<std::size_t>(target)].height;
      const bool ok = a == Action::Walk ? h_there == h_here
                                        : (h_there == h_here + 1 || h_there < h_here);
      if (ok) {
        next.x = tx;
        next.y = ty;
      }
      break;
    }
  }
  return next;
}

StateIndex::StateIndex(const Task& task, std::uint64_t limit)
    : task_(&task), num_lights_(task.num_lights()) {
  if (num_lights_ > kMaxEnumLights) {
    throw CapacityError("task '" + task.id() + "' has " + std::to_string(num_lights_) +
                        " lights; state enumeration supports at most " +
                        std::to_string(kMaxEnumLights));
  }
  size_ = static_cast<std::uint64_t>(task.num_cells()) * 4u * (std::uint64_t{1} << num_lights_);
  if (size_ > limit) {
    throw CapacityError("task '" + task.id() + "' has " + std::to_string(size_) +
                        " states, above the limit of " + std::to_string(limit));
  }
}

std::uint32_t StateIndex::index(const WorldState& s) const {
  const auto cell = static_cast<std::uint32_t>(task_->cell_index(s.x, s.y));
  return ((cell * 4u + static_cast<std::uint32_t>(s.dir)) << num_lights_) | s.lit;
}

WorldState StateIndex::state(std::uint32_t index) const {
  const std::uint32_t lit = index & ((std::uint32_t{1} << num_lights_) - 1);
  const std::uint32_t rest = index >> num_lights_;
  const Cell& c = task_->cells()[rest / 4u];
  return WorldState{c.x, c.y, static_cast<Dir>(rest % 4u), lit};
}

StateIndex enumerate_states(const Task& task, std::uint64_t limit) {
  return StateIndex(task, limit);
}

}  // namespace hiplan
