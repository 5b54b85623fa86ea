#include "hiplan/program.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "hiplan/error.hpp"

namespace hiplan {

Body to_body(const std::vector<Action>& actions) {
  Body out;
  out.reserve(actions.size());
  for (Action a : actions) out.push_back(Instruction::action(a));
  return out;
}

std::string to_string(Instruction ins) {
  if (ins.is_call()) return "p" + std::to_string(ins.callee());
  return std::string(to_string(ins.action()));
}

Program::Program(Body main, std::vector<Body> subs) {
  bodies_.reserve(subs.size() + 1);
  bodies_.push_back(std::move(main));
  for (auto& b : subs) bodies_.push_back(std::move(b));
}

const Body& Program::body(int k) const {
  static const Body kEmpty;
  if (k < 0 || k >= static_cast<int>(bodies_.size())) return kEmpty;
  return bodies_[static_cast<std::size_t>(k)];
}

Body& Program::mutable_body(int k) {
  if (k >= static_cast<int>(bodies_.size())) bodies_.resize(static_cast<std::size_t>(k) + 1);
  return bodies_[static_cast<std::size_t>(k)];
}

int Program::num_bodies() const {
  int n = static_cast<int>(bodies_.size());
  while (n > 1 && bodies_[static_cast<std::size_t>(n) - 1].empty()) --n;
  return n;
}

int Program::num_defined_subroutines() const {
  int n = 0;
  for (std::size_t k = 1; k < bodies_.size(); ++k) n += bodies_[k].empty() ? 0 : 1;
  return n;
}

bool operator==(const Program& a, const Program& b) {
  const int n = std::max(a.num_bodies(), b.num_bodies());
  for (int k = 0; k < n; ++k) {
    if (a.body(k) != b.body(k)) return false;
  }
  return true;
}

int program_length(const Program& p) {
  int n = 0;
  for (int k = 0; k < p.num_bodies(); ++k) n += static_cast<int>(p.body(k).size());
  return n;
}

namespace {

Instruction parse_token(std::string_view tok, int max_subroutines, int line_no) {
  if (auto a = action_from_token(tok)) return Instruction::action(*a);
  if (tok.size() >= 2 && tok[0] == 'p') {
    int k = 0;
    bool digits = true;
    for (char c : tok.substr(1)) {
      if (c < '0' || c > '9') {
        digits = false;
        break;
      }
      k = k * 10 + (c - '0');
      if (k > 1'000'000) break;
    }
    if (digits) {
      if (k < 1 || k > max_subroutines) {
        throw ParseError("line " + std::to_string(line_no) + ": call target '" + std::string(tok) +
                         "' outside p1..p" + std::to_string(max_subroutines));
      }
      return Instruction::call(k);
    }
  }
  throw ParseError("line " + std::to_string(line_no) + ": unknown token '" + std::string(tok) + "'");
}

int parse_label(std::string_view label, int max_subroutines, int line_no) {
  if (label == "main") return 0;
  if (label.size() >= 2 && label[0] == 'p') {
    Instruction ins = parse_token(label, max_subroutines, line_no);
    if (ins.is_call()) return ins.callee();
  }
  throw ParseError("line " + std::to_string(line_no) + ": unknown label '" + std::string(label) +
                   "'");
}

}  // namespace

Program parse_program(std::string_view text, int max_subroutines) {
  Program p;
  std::vector<bool> seen(static_cast<std::size_t>(max_subroutines) + 1, false);
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string head;
    if (!(words >> head)) continue;
    std::string rest;
    // Allow "main:walk" as well as "main: walk".
    if (auto colon = head.find(':'); colon != std::string::npos) {
      rest = head.substr(colon + 1);
      head.erase(colon);
    } else {
      std::string colon_tok;
      if (!(words >> colon_tok) || colon_tok.front() != ':') {
        throw ParseError("line " + std::to_string(line_no) + ": expected '<label>:'");
      }
      rest = colon_tok.substr(1);
    }
    const int k = parse_label(head, max_subroutines, line_no);
    if (seen[static_cast<std::size_t>(k)]) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate label '" + head + "'");
    }
    seen[static_cast<std::size_t>(k)] = true;
    Body& body = p.mutable_body(k);
    if (!rest.empty()) body.push_back(parse_token(rest, max_subroutines, line_no));
    std::string tok;
    while (words >> tok) body.push_back(parse_token(tok, max_subroutines, line_no));
  }
  if (!seen[0]) throw ParseError("missing 'main:' line");
  return p;
}

std::string serialize_program(const Program& p) {
  std::string out;
  for (int k = 0; k < p.num_bodies(); ++k) {
    const Body& b = p.body(k);
    if (k > 0 && b.empty()) continue;
    out += k == 0 ? "main:" : "p" + std::to_string(k) + ":";
    for (Instruction ins : b) {
      out += ' ';
      out += to_string(ins);
    }
    out += '\n';
  }
  return out;
}

Program program_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("program must be a JSON object");
  if (!j.contains("main")) throw ParseError("program is missing 'main'");
  Program p;
  for (const auto& [key, tokens] : j.items()) {
    const int k = parse_label(key, Program::kMaxSubroutines, 0);
    if (!tokens.is_array()) throw ParseError("program body '" + key + "' must be an array");
    Body& body = p.mutable_body(k);
    for (const auto& tok : tokens) {
      if (!tok.is_string()) throw ParseError("program tokens must be strings");
      body.push_back(parse_token(tok.get<std::string>(), Program::kMaxSubroutines, 0));
    }
  }
  return p;
}

nlohmann::json program_to_json(const Program& p) {
  nlohmann::json j = nlohmann::json::object();
  for (int k = 0; k < p.num_bodies(); ++k) {
    const Body& b = p.body(k);
    if (k > 0 && b.empty()) continue;
    auto arr = nlohmann::json::array();
    for (Instruction ins : b) arr.push_back(to_string(ins));
    j[k == 0 ? std::string("main") : "p" + std::to_string(k)] = std::move(arr);
  }
  return j;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Solved:
      return "solved";
    case Outcome::NotSolved:
      return "not-solved";
    case Outcome::NonHalting:
      return "non-halting";
  }
  return "?";
}

namespace {

enum class Flow { Continue, Goal, OutOfBudget };

class Executor {
 public:
  Executor(const Task& task, const Program& p, Budget budget, ExecutionObserver* obs,
           ExecutionResult& out)
      : task_(task), program_(p), budget_(budget), obs_(obs), out_(out) {}

  Flow run(int k, int depth) {
    if (depth > budget_.max_depth) return Flow::OutOfBudget;
    const Body& body = program_.body(k);
    for (std::size_t j = 0; j < body.size(); ++j) {
      const Instruction ins = body[j];
      if (ins.is_call()) {
        if (obs_) obs_->on_call(k, static_cast<int>(j), ins.callee());
        const Flow f = run(ins.callee(), depth + 1);
        if (f != Flow::Continue) return f;
        if (obs_) obs_->on_return(ins.callee());
        continue;
      }
      if (static_cast<std::int64_t>(out_.trace.size()) >= budget_.max_steps) {
        return Flow::OutOfBudget;
      }
      const WorldState before = out_.final_state;
      out_.final_state = apply_action(task_, before, ins.action());
      out_.trace.push_back(ins.action());
      if (obs_) obs_->on_action(k, static_cast<int>(j), before, out_.final_state);
      if (is_goal(task_, out_.final_state)) return Flow::Goal;
    }
    return Flow::Continue;
  }

 private:
  const Task& task_;
  const Program& program_;
  Budget budget_;
  ExecutionObserver* obs_;
  ExecutionResult& out_;
};

}  // namespace

ExecutionResult execute(const Task& task, const Program& p, Budget budget,
                        ExecutionObserver* observer) {
  ExecutionResult out;
  out.final_state = initial_state(task);
  Executor exec(task, p, budget, observer, out);
  switch (exec.run(0, 0)) {
    case Flow::Goal:
      out.outcome = Outcome::Solved;
      break;
    case Flow::Continue:
      out.outcome = Outcome::NotSolved;
      break;
    case Flow::OutOfBudget:
      out.outcome = Outcome::NonHalting;
      break;
  }
  return out;
}

namespace {

// Records the execution tree as DOT as it unfolds.
class TreeBuilder : public ExecutionObserver {
 public:
  explicit TreeBuilder(const Program& p) : program_(p) {
    stack_.push_back(Frame{add_node("main", "box"), false});
  }

  void on_action(int body, int pos, const WorldState&, const WorldState&) override {
    const Action a = program_.body(body)[static_cast<std::size_t>(pos)].action();
    const int id = add_node(std::string(to_string(a)), "ellipse");
    add_edge(stack_.back().node, id, stack_.back().dashed);
  }

  void on_call(int, int, int callee) override {
    const bool reuse = !called_.insert(callee).second;
    const int id = add_node("p" + std::to_string(callee), "box");
    add_edge(stack_.back().node, id, stack_.back().dashed);
    stack_.push_back(Frame{id, reuse});
  }

  void on_return(int) override { stack_.pop_back(); }

  std::string dot() const {
    std::ostringstream os;
    os << "digraph program {\n  node [fontname=\"Helvetica\"];\n  ordering=out;\n";
    os << nodes_.str() << edges_.str() << "}\n";
    return os.str();
  }

 private:
  struct Frame {
    int node;
    bool dashed;
  };

  int add_node(const std::string& label, const char* shape) {
    const int id = next_id_++;
    nodes_ << "  n" << id << " [label=\"" << label << "\", shape=" << shape << "];\n";
    return id;
  }

  void add_edge(int from, int to, bool dashed) {
    edges_ << "  n" << from << " -> n" << to;
    if (dashed) edges_ << " [style=dashed]";
    edges_ << ";\n";
  }

  const Program& program_;
  int next_id_ = 0;
  std::vector<Frame> stack_;
  std::set<int> called_;
  std::ostringstream nodes_;
  std::ostringstream edges_;
};

}  // namespace

std::string render_tree(const Program& p, const Task& task) {
  TreeBuilder tree(p);
  const ExecutionResult r = execute(task, p, Budget{}, &tree);
  if (!r.solved()) {
    throw NotSolvedError("program does not solve task '" + task.id() + "' (" +
                         std::string(to_string(r.outcome)) + ")");
  }
  return tree.dot();
}

}  // namespace hiplan
