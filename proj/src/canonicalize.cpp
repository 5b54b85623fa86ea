#include "hiplan/canonicalize.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "hiplan/error.hpp"

namespace hiplan {

bool CanonReport::any() const {
  return std::any_of(modified.begin(), modified.end(), [](bool b) { return b; });
}

namespace canon {

namespace {

std::vector<bool> reachable(const Program& p) {
  const int n = p.num_bodies();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<int> stack = {0};
  seen[0] = true;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (Instruction ins : p.body(k)) {
      if (!ins.is_call() || ins.callee() >= n) continue;
      const auto c = static_cast<std::size_t>(ins.callee());
      if (!seen[c]) {
        seen[c] = true;
        stack.push_back(ins.callee());
      }
    }
  }
  return seen;
}

Program relabel(const Program& p, const std::vector<int>& order) {
  // order[i] = old index that becomes i + 1
  std::vector<int> new_index(static_cast<std::size_t>(p.num_bodies()) + 1, 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    new_index[static_cast<std::size_t>(order[i])] = static_cast<int>(i) + 1;
  }
  auto map_body = [&](const Body& b) {
    Body out;
    out.reserve(b.size());
    for (Instruction ins : b) {
      if (ins.is_call() && ins.callee() < static_cast<int>(new_index.size()) &&
          new_index[static_cast<std::size_t>(ins.callee())] > 0) {
        out.push_back(Instruction::call(new_index[static_cast<std::size_t>(ins.callee())]));
      } else {
        out.push_back(ins);
      }
    }
    return out;
  };
  Program out(map_body(p.main()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.mutable_body(static_cast<int>(i) + 1) = map_body(p.body(order[i]));
  }
  return out;
}

// Completes a first-seen order with defined subroutines that were never seen.
std::vector<int> complete_order(const Program& p, std::vector<int> order) {
  for (int k = 1; k < p.num_bodies(); ++k) {
    if (!p.body(k).empty() && std::find(order.begin(), order.end(), k) == order.end()) {
      order.push_back(k);
    }
  }
  return order;
}

class UsageRecorder : public ExecutionObserver {
 public:
  explicit UsageRecorder(const Program& p) {
    for (int k = 0; k < p.num_bodies(); ++k) {
      runs_.emplace_back(p.body(k).size(), 0);
      effects_.emplace_back(p.body(k).size(), 0);
    }
  }
  void on_action(int body, int pos, const WorldState& before, const WorldState& after) override {
    ++runs_[static_cast<std::size_t>(body)][static_cast<std::size_t>(pos)];
    if (!(before == after)) ++effects_[static_cast<std::size_t>(body)][static_cast<std::size_t>(pos)];
  }
  void on_call(int body, int pos, int callee) override {
    ++runs_[static_cast<std::size_t>(body)][static_cast<std::size_t>(pos)];
    if (std::find(first_called_.begin(), first_called_.end(), callee) == first_called_.end()) {
      first_called_.push_back(callee);
    }
  }

  int runs(int body, std::size_t pos) const { return runs_[static_cast<std::size_t>(body)][pos]; }
  int effects(int body, std::size_t pos) const {
    return effects_[static_cast<std::size_t>(body)][pos];
  }
  const std::vector<int>& first_called() const { return first_called_; }

 private:
  std::vector<std::vector<int>> runs_;
  std::vector<std::vector<int>> effects_;
  std::vector<int> first_called_;
};

}  // namespace

std::vector<int> call_sites(const Program& p) {
  const int n = p.num_bodies();
  const std::vector<bool> live = reachable(p);
  std::vector<int> sites(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < n; ++k) {
    if (!live[static_cast<std::size_t>(k)]) continue;
    for (Instruction ins : p.body(k)) {
      if (ins.is_call() && ins.callee() < n) ++sites[static_cast<std::size_t>(ins.callee())];
    }
  }
  return sites;
}

Program maximize_reuse(const Program& p) {
  const int n = p.num_bodies();
  std::vector<int> order;
  for (int k = 1; k < n; ++k) {
    if (!p.body(k).empty()) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return p.body(a).size() > p.body(b).size(); });

  Program out = p;
  for (int j = 0; j < n; ++j) {
    const Body& src = p.body(j);
    Body dst;
    std::size_t i = 0;
    while (i < src.size()) {
      bool matched = false;
      for (int k : order) {
        const Body& sub = p.body(k);
        if (k == j || (j != 0 && sub.size() >= src.size())) continue;
        if (i + sub.size() <= src.size() &&
            std::equal(sub.begin(), sub.end(), src.begin() + static_cast<std::ptrdiff_t>(i))) {
          dst.push_back(Instruction::call(k));
          i += sub.size();
          matched = true;
          break;
        }
      }
      if (!matched) dst.push_back(src[i++]);
    }
    out.mutable_body(j) = std::move(dst);
  }
  return out;
}

Program remove_ineffective(const Task& task, const Program& p) {
  UsageRecorder usage(p);
  execute(task, p, Budget{}, &usage);
  // Bodies with no static path from main are left to remove_uncalled.
  const std::vector<bool> live = reachable(p);
  Program out = p;
  for (int k = 0; k < p.num_bodies(); ++k) {
    if (!live[static_cast<std::size_t>(k)]) continue;
    const Body& src = p.body(k);
    Body dst;
    for (std::size_t j = 0; j < src.size(); ++j) {
      if (usage.runs(k, j) == 0) continue;
      if (!src[j].is_call() && usage.effects(k, j) == 0) continue;
      dst.push_back(src[j]);
    }
    out.mutable_body(k) = std::move(dst);
  }
  // Calls into subroutines that ended up empty do nothing either.
  for (bool changed = true; changed;) {
    changed = false;
    for (int k = 0; k < out.num_bodies(); ++k) {
      if (!live[static_cast<std::size_t>(k)]) continue;
      Body& b = out.mutable_body(k);
      const auto before = b.size();
      std::erase_if(b, [&](Instruction ins) { return ins.is_call() && out.body(ins.callee()).empty(); });
      changed = changed || b.size() != before;
    }
  }
  return out;
}

Program remove_uncalled(const Program& p) {
  const std::vector<bool> live = reachable(p);
  Program out = p;
  for (int k = 1; k < p.num_bodies(); ++k) {
    if (!live[static_cast<std::size_t>(k)]) out.mutable_body(k).clear();
  }
  return out;
}

Program inline_single_call(const Program& p) {
  Program out = p;
  for (bool changed = true; changed;) {
    changed = false;
    const std::vector<int> sites = call_sites(out);
    for (int k = 1; k < out.num_bodies() && !changed; ++k) {
      if (sites[static_cast<std::size_t>(k)] != 1 || out.body(k).empty()) continue;
      for (int j = 0; j < out.num_bodies() && !changed; ++j) {
        if (j == k) continue;
        Body& b = out.mutable_body(j);
        auto it = std::find(b.begin(), b.end(), Instruction::call(k));
        if (it == b.end()) continue;
        const Body inlined = out.body(k);
        it = b.erase(it);
        b.insert(it, inlined.begin(), inlined.end());
        out.mutable_body(k).clear();
        changed = true;
      }
    }
  }
  return out;
}

Program inline_single_instruction(const Program& p) {
  Program out = p;
  for (bool changed = true; changed;) {
    changed = false;
    for (int k = 1; k < out.num_bodies(); ++k) {
      const Body& body = out.body(k);
      if (body.size() != 1 || body[0] == Instruction::call(k)) continue;
      const Instruction only = body[0];
      for (int j = 0; j < out.num_bodies(); ++j) {
        if (j == k) continue;
        for (Instruction& ins : out.mutable_body(j)) {
          if (ins == Instruction::call(k)) ins = only;
        }
      }
      out.mutable_body(k).clear();
      changed = true;
    }
  }
  return out;
}

Program order_turns_and_lights(const Program& p) {
  const Instruction light = Instruction::action(Action::Light);
  Program out = p;
  for (int k = 0; k < out.num_bodies(); ++k) {
    Body& b = out.mutable_body(k);
    for (bool swapped = true; swapped;) {
      swapped = false;
      for (std::size_t j = 0; j + 1 < b.size(); ++j) {
        if (!b[j].is_call() && is_turn(b[j].action()) && b[j + 1] == light) {
          std::swap(b[j], b[j + 1]);
          swapped = true;
        }
      }
    }
  }
  return out;
}

Program renumber_by_execution(const Task& task, const Program& p) {
  UsageRecorder usage(p);
  execute(task, p, Budget{}, &usage);
  return relabel(p, complete_order(p, usage.first_called()));
}

Program renumber_by_first_use(const Program& p) {
  std::vector<int> order;
  std::vector<bool> seen(static_cast<std::size_t>(p.num_bodies()), false);
  auto visit = [&](auto&& self, int k) -> void {
    for (Instruction ins : p.body(k)) {
      if (!ins.is_call() || ins.callee() >= p.num_bodies()) continue;
      const auto c = static_cast<std::size_t>(ins.callee());
      if (seen[c]) continue;
      seen[c] = true;
      order.push_back(ins.callee());
      self(self, ins.callee());
    }
  };
  visit(visit, 0);
  return relabel(p, complete_order(p, order));
}

}  // namespace canon

namespace {

ExecutionResult require_solved(const Task& task, const Program& p, const char* what) {
  ExecutionResult r = execute(task, p);
  if (!r.solved()) {
    throw NotSolvedError(std::string(what) + " does not solve task '" + task.id() + "' (" +
                         std::string(to_string(r.outcome)) + ")");
  }
  return r;
}

}  // namespace

CanonResult canonicalize(const Task& task, const Program& p) {
  require_solved(task, p, "program");
  CanonResult result{p, {}};
  result.report.original_length = program_length(p);

  constexpr int kMaxRounds = 5;
  for (int round = 0; round < kMaxRounds; ++round) {
    bool changed = false;
    auto step = [&](int pass, Program next) {
      if (!(next == result.program)) {
        result.report.modified[static_cast<std::size_t>(pass)] = true;
        changed = true;
        result.program = std::move(next);
      }
    };
    step(0, canon::maximize_reuse(result.program));
    step(1, canon::remove_ineffective(task, result.program));
    step(2, canon::remove_uncalled(result.program));
    step(3, canon::inline_single_call(result.program));
    step(4, canon::inline_single_instruction(result.program));
    step(5, canon::order_turns_and_lights(result.program));
    step(6, canon::renumber_by_execution(task, result.program));
    if (!changed) break;
  }
  result.report.canonical_length = program_length(result.program);
  return result;
}

bool trace_equivalent(const Task& task, const Program& p, const Program& q) {
  const ExecutionResult a = require_solved(task, p, "first program");
  const ExecutionResult b = require_solved(task, q, "second program");
  return a.final_state == b.final_state;
}

}  // namespace hiplan
