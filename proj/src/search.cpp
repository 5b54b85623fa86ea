#include "hiplan/search.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

#include "hiplan/error.hpp"

namespace hiplan {

HeuristicTable compute_heuristic(const Task& task, std::uint64_t limit) {
  StateIndex index = enumerate_states(task, limit);
  const auto n = static_cast<std::uint32_t>(index.size());

  // Reverse adjacency in CSR form over state-changing transitions.
  std::vector<std::uint32_t> in_degree(static_cast<std::size_t>(n) + 1, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // (to, from)
  edges.reserve(static_cast<std::size_t>(n) * 3);
  for (std::uint32_t i = 0; i < n; ++i) {
    const WorldState s = index.state(i);
    for (Action a : kAllActions) {
      const WorldState next = apply_action(task, s, a);
      if (next == s) continue;
      edges.emplace_back(index.index(next), i);
    }
  }
  for (const auto& e : edges) ++in_degree[e.first + 1];
  for (std::uint32_t i = 0; i < n; ++i) in_degree[i + 1] += in_degree[i];
  std::vector<std::uint32_t> sources(edges.size());
  std::vector<std::uint32_t> cursor(in_degree.begin(), in_degree.end() - 1);
  for (const auto& [to, from] : edges) sources[cursor[to]++] = from;

  std::vector<std::uint16_t> h(n, HeuristicTable::kUnreachable);
  std::vector<std::uint32_t> queue;
  queue.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (is_goal(task, index.state(i))) {
      h[i] = 0;
      queue.push_back(i);
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::uint32_t s = queue[head];
    for (std::uint32_t e = in_degree[s]; e < in_degree[s + 1]; ++e) {
      const std::uint32_t prev = sources[e];
      if (h[prev] != HeuristicTable::kUnreachable) continue;
      h[prev] = static_cast<std::uint16_t>(h[s] + 1);
      queue.push_back(prev);
    }
  }
  return HeuristicTable(index, std::move(h));
}

bool is_redundant(std::span<const Action> previous, Action a) {
  if (previous.empty()) return false;
  const Action last = previous.back();
  if (a == Action::Light) return is_turn(last);
  if (a == Action::Left && last == Action::Right) return true;
  if (a == Action::Right && last == Action::Left) return true;
  if (is_turn(a) && previous.size() >= 2) {
    return last == a && previous[previous.size() - 2] == a;
  }
  return false;
}

namespace {

struct Node {
  std::uint32_t parent;
  std::uint32_t state;
  std::uint16_t g;
  Action action;
};

struct Entry {
  std::uint32_t f;
  std::uint16_t g;
  std::uint32_t node;
};

// Min-f first; among equal f prefer deeper nodes, then older ones.
struct EntryAfter {
  bool operator()(const Entry& a, const Entry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.g != b.g) return a.g < b.g;
    return a.node > b.node;
  }
};

constexpr std::uint32_t kRoot = 0xFFFFFFFF;

Trace trace_of(const std::vector<Node>& nodes, std::uint32_t id) {
  Trace t;
  for (std::uint32_t cur = id; nodes[cur].parent != kRoot; cur = nodes[cur].parent) {
    t.push_back(nodes[cur].action);
  }
  std::reverse(t.begin(), t.end());
  return t;
}

}  // namespace

TraceSet search_traces(const Task& task, const HeuristicTable& h, const SearchConfig& cfg) {
  const StateIndex& index = h.index();
  TraceSet out;
  const std::uint32_t start = index.index(initial_state(task));
  if (h.at(start) == HeuristicTable::kUnreachable) {
    out.exhausted = true;
    return out;
  }

  std::vector<Node> nodes;
  nodes.push_back(Node{kRoot, start, 0, Action::Walk});
  std::priority_queue<Entry, std::vector<Entry>, EntryAfter> frontier;
  frontier.push(Entry{h.at(start), 0, 0});

  std::vector<std::uint32_t> done;
  std::uint32_t bound = 0;  // cost of the min_traces-th trace once known
  std::array<Action, 2> last{};
  while (!frontier.empty()) {
    const Entry top = frontier.top();
    if (done.size() >= cfg.min_traces && top.f > bound) break;
    frontier.pop();
    const Node node = nodes[top.node];
    const WorldState s = index.state(node.state);
    if (is_goal(task, s)) {
      done.push_back(top.node);
      if (done.size() == cfg.min_traces) bound = node.g;
      continue;
    }
    if (++out.expansions > cfg.max_expansions) {
      throw CapacityError("trace search for task '" + task.id() + "' exceeded " +
                          std::to_string(cfg.max_expansions) + " expansions");
    }
    std::size_t depth = 0;
    if (node.parent != kRoot) {
      last[1] = node.action;
      depth = 1;
      if (nodes[node.parent].parent != kRoot) {
        last[0] = nodes[node.parent].action;
        depth = 2;
      } else {
        last[0] = node.action;
      }
    }
    const std::span<const Action> previous(last.data() + (2 - depth), depth);
    for (Action a : kAllActions) {
      if (is_redundant(previous, a)) continue;
      const WorldState next = apply_action(task, s, a);
      if (next == s) continue;
      const std::uint32_t ni = index.index(next);
      const std::uint16_t hn = h.at(ni);
      if (hn == HeuristicTable::kUnreachable) continue;
      const auto g = static_cast<std::uint16_t>(node.g + 1);
      nodes.push_back(Node{top.node, ni, g, a});
      frontier.push(Entry{static_cast<std::uint32_t>(g) + hn, g,
                          static_cast<std::uint32_t>(nodes.size() - 1)});
    }
  }

  out.exhausted = done.size() < cfg.min_traces;
  out.traces.reserve(done.size());
  for (std::uint32_t id : done) out.traces.push_back(trace_of(nodes, id));
  std::sort(out.traces.begin(), out.traces.end(), [](const Trace& a, const Trace& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  out.max_cost = out.traces.empty() ? 0 : static_cast<int>(out.traces.back().size());
  return out;
}

std::string trace_to_string(const Trace& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += to_string(t[i]);
  }
  return s;
}

std::string write_trace_file(std::string_view task_id, const TraceSet& traces) {
  std::ostringstream os;
  os << "# task=" << task_id << " max_cost=" << traces.max_cost
     << " count=" << traces.traces.size() << "\n";
  for (const Trace& t : traces.traces) os << trace_to_string(t) << "\n";
  return os.str();
}

TraceFile read_trace_file(std::string_view text) {
  TraceFile out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = false;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream words(line.substr(1));
      std::string kv;
      while (words >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        try {
          if (key == "task") out.task_id = value;
          if (key == "max_cost") out.traces.max_cost = std::stoi(value);
          if (key == "count") expected = std::stoul(value);
        } catch (const std::exception&) {
          throw ParseError("bad trace file header: " + line);
        }
      }
      header = true;
      continue;
    }
    Trace t;
    std::istringstream words(line);
    std::string tok;
    while (words >> tok) {
      auto a = action_from_token(tok);
      if (!a) throw ParseError("unknown action '" + tok + "' in trace file");
      t.push_back(*a);
    }
    out.traces.traces.push_back(std::move(t));
  }
  if (!header) throw ParseError("trace file is missing its header");
  if (expected != out.traces.traces.size()) {
    throw ParseError("trace file declares " + std::to_string(expected) + " traces but holds " +
                     std::to_string(out.traces.traces.size()));
  }
  return out;
}

}  // namespace hiplan
