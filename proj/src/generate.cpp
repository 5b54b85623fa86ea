#include "hiplan/generate.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "hiplan/canonicalize.hpp"
#include "hiplan/error.hpp"

namespace hiplan {

int count_nonoverlapping(const std::vector<Action>& seq, const std::vector<Action>& pattern) {
  if (pattern.empty() || pattern.size() > seq.size()) return 0;
  int count = 0;
  for (std::size_t i = 0; i + pattern.size() <= seq.size();) {
    if (std::equal(pattern.begin(), pattern.end(), seq.begin() + static_cast<std::ptrdiff_t>(i))) {
      ++count;
      i += pattern.size();
    } else {
      ++i;
    }
  }
  return count;
}

std::vector<CandidateSub> candidate_subroutines(const Trace& trace) {
  std::vector<CandidateSub> out;
  std::set<std::vector<Action>> seen;
  const std::size_t n = trace.size();
  for (std::size_t len = n / 2; len >= 2; --len) {
    for (std::size_t start = 0; start + len <= n; ++start) {
      std::vector<Action> body(trace.begin() + static_cast<std::ptrdiff_t>(start),
                               trace.begin() + static_cast<std::ptrdiff_t>(start + len));
      if (!seen.insert(body).second) continue;
      if (count_nonoverlapping(trace, body) >= 2) {
        out.push_back(CandidateSub{std::move(body), static_cast<int>(start)});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const CandidateSub& a, const CandidateSub& b) {
    if (a.body.size() != b.body.size()) return a.body.size() > b.body.size();
    if (a.first_pos != b.first_pos) return a.first_pos < b.first_pos;
    return a.body < b.body;
  });
  return out;
}

namespace {

// Replaces every greedy left-to-right match of `pattern` in `body` by `call`.
int replace_matches(Body& body, const Body& pattern, Instruction call) {
  Body out;
  out.reserve(body.size());
  int replaced = 0;
  for (std::size_t i = 0; i < body.size();) {
    if (i + pattern.size() <= body.size() &&
        std::equal(pattern.begin(), pattern.end(), body.begin() + static_cast<std::ptrdiff_t>(i))) {
      out.push_back(call);
      i += pattern.size();
      ++replaced;
    } else {
      out.push_back(body[i++]);
    }
  }
  body = std::move(out);
  return replaced;
}

bool same_final_state(const Task& task, const Program& p, const WorldState& target) {
  const ExecutionResult r = execute(task, p);
  return r.solved() && r.final_state == target;
}

WorldState final_state_of(const Task& task, const Trace& trace) {
  WorldState s = initial_state(task);
  for (Action a : trace) s = apply_action(task, s, a);
  return s;
}

std::vector<Program> recursive_for(const Trace& trace, const Task& task, const WorldState& target) {
  std::vector<Program> out;
  const std::size_t n = trace.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t len = n - k;
    for (std::size_t period = 1; period <= len; ++period) {
      bool periodic = true;
      for (std::size_t i = period; i < len && periodic; ++i) {
        periodic = trace[k + i] == trace[k + i - period];
      }
      if (!periodic) continue;
      Body main(to_body(Trace(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(k))));
      main.push_back(Instruction::call(1));
      Body sub = to_body(Trace(trace.begin() + static_cast<std::ptrdiff_t>(k),
                               trace.begin() + static_cast<std::ptrdiff_t>(k + period)));
      sub.push_back(Instruction::call(1));
      Program p(std::move(main), {std::move(sub)});
      if (same_final_state(task, p, target)) out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace

std::optional<Program> rewrite_with(const Trace& trace, const std::vector<CandidateSub>& chosen) {
  if (chosen.size() > static_cast<std::size_t>(Program::kMaxSubroutines)) return std::nullopt;
  Program p(to_body(trace));
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    const Body pattern = to_body(chosen[i].body);
    for (int j = 0; j < k; ++j) replace_matches(p.mutable_body(j), pattern, Instruction::call(k));
    p.mutable_body(k) = pattern;
  }
  std::vector<int> sites(chosen.size() + 1, 0);
  for (int j = 0; j < p.num_bodies(); ++j) {
    for (Instruction ins : p.body(j)) {
      if (ins.is_call()) ++sites[static_cast<std::size_t>(ins.callee())];
    }
  }
  for (std::size_t k = 1; k < sites.size(); ++k) {
    if (sites[k] < 2) return std::nullopt;
  }
  return canon::renumber_by_first_use(p);
}

std::vector<Program> recursive_variants(const Trace& trace, const Task& task) {
  return recursive_for(trace, task, final_state_of(task, trace));
}

std::vector<Program> postgoal_variants(const Trace& trace, const std::vector<CandidateSub>& candidates,
                                       const Task& task) {
  std::vector<Program> out;
  const WorldState target = final_state_of(task, trace);
  std::set<Trace> extended_seen;
  for (const CandidateSub& c : candidates) {
    const auto& body = c.body;
    for (std::size_t plen = 1; plen < body.size(); ++plen) {
      if (plen > trace.size()) break;
      if (!std::equal(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(plen),
                      trace.end() - static_cast<std::ptrdiff_t>(plen))) {
        continue;
      }
      Trace extended = trace;
      extended.insert(extended.end(), body.begin() + static_cast<std::ptrdiff_t>(plen), body.end());
      if (auto p = rewrite_with(extended, {c}); p && same_final_state(task, *p, target)) {
        out.push_back(std::move(*p));
      }
      if (extended_seen.insert(extended).second) {
        for (Program& r : recursive_for(extended, task, target)) out.push_back(std::move(r));
      }
    }
  }
  return out;
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::Flat:
      return "flat";
    case Origin::Rewrite:
      return "rewrite";
    case Origin::Recursive:
      return "recursive";
    case Origin::PostGoal:
      return "post-goal";
    case Origin::Observed:
      return "observed";
  }
  return "?";
}

std::pair<std::size_t, bool> Corpus::add(CorpusEntry e) {
  std::string key = serialize_program(e.program);
  if (auto it = index_.find(key); it != index_.end()) return {it->second, false};
  const std::size_t i = entries_.size();
  index_.emplace(std::move(key), i);
  entries_.push_back(std::move(e));
  return {i, true};
}

std::optional<std::size_t> Corpus::find(const Program& canonical) const {
  if (auto it = index_.find(serialize_program(canonical)); it != index_.end()) return it->second;
  return std::nullopt;
}

void Corpus::sort() {
  std::vector<std::pair<std::string, CorpusEntry>> keyed;
  keyed.reserve(entries_.size());
  for (auto& e : entries_) keyed.emplace_back(serialize_program(e.program), std::move(e));
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.second.length != b.second.length) return a.second.length < b.second.length;
    if (a.second.steps != b.second.steps) return a.second.steps < b.second.steps;
    return a.first < b.first;
  });
  entries_.clear();
  index_.clear();
  for (auto& [key, e] : keyed) {
    index_.emplace(std::move(key), entries_.size());
    entries_.push_back(std::move(e));
  }
}

namespace {

CorpusEntry make_entry(const Task& task, const Program& canonical, Origin origin, int trace_index) {
  const ExecutionResult r = execute(task, canonical);
  return CorpusEntry{canonical, program_length(canonical), static_cast<int>(r.steps()), origin, trace_index};
}

}  // namespace

Corpus build_corpus(const Task& task, const TraceSet& traces, const CorpusConfig& cfg,
                    CorpusStats* stats) {
  if (traces.traces.empty()) throw EmptyCorpusError("no traces for task '" + task.id() + "'");
  Corpus corpus(task.id());
  CorpusStats local;
  const std::size_t max_subs =
      static_cast<std::size_t>(std::clamp(cfg.max_subroutines, 0, Program::kMaxSubroutines));

  for (std::size_t ti = 0; ti < traces.traces.size(); ++ti) {
    const Trace& trace = traces.traces[ti];
    const int trace_index = static_cast<int>(ti);
    std::size_t produced = 0;
    auto emit = [&](const Program& p, Origin origin) {
      if (++produced > cfg.max_programs_per_trace) {
        throw CapacityError("trace " + std::to_string(ti) + " of task '" + task.id() +
                            "' produced more than " + std::to_string(cfg.max_programs_per_trace) +
                            " programs");
      }
      const Program c = canonicalize(task, p).program;
      corpus.add(make_entry(task, c, origin, trace_index));
    };

    const std::vector<CandidateSub> cands = candidate_subroutines(trace);
    std::vector<CandidateSub> chosen;
    // Supersets of a rejected subset are rejected too: later subroutines never
    // remove call sites of earlier ones.
    auto dfs = [&](auto&& self, std::size_t next) -> void {
      for (std::size_t i = next; i < cands.size(); ++i) {
        chosen.push_back(cands[i]);
        if (auto p = rewrite_with(trace, chosen)) {
          emit(*p, Origin::Rewrite);
          if (chosen.size() < max_subs) self(self, i + 1);
        } else {
          ++local.rejected;
        }
        chosen.pop_back();
      }
    };
    emit(Program(to_body(trace)), Origin::Flat);
    if (max_subs > 0) {
      dfs(dfs, 0);
      for (const Program& p : recursive_variants(trace, task)) emit(p, Origin::Recursive);
      for (const Program& p : postgoal_variants(trace, cands, task)) emit(p, Origin::PostGoal);
    }
    local.generated += produced;
  }
  corpus.sort();
  if (stats) *stats = local;
  return corpus;
}

std::pair<std::size_t, bool> union_observed(Corpus& corpus, const Task& task, const Program& p) {
  const Program c = canonicalize(task, p).program;
  return corpus.add(make_entry(task, c, Origin::Observed, -1));
}

std::string write_corpus_file(const Corpus& corpus) {
  std::ostringstream os;
  os << "# task=" << corpus.task_id() << " n=" << corpus.size() << "\n";
  for (const CorpusEntry& e : corpus.entries()) {
    os << "\n## length=" << e.length << " steps=" << e.steps;
    if (e.origin == Origin::Observed) os << " observed";
    os << "\n" << serialize_program(e.program);
  }
  return os.str();
}

Corpus read_corpus_file(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string task_id;
  std::size_t expected = 0;
  bool header = false;
  std::vector<CorpusEntry> entries;
  std::string program_text;
  std::optional<CorpusEntry> pending;
  auto flush = [&] {
    if (!pending) return;
    pending->program = parse_program(program_text);
    if (pending->origin != Origin::Observed) {
      pending->origin =
          pending->program.num_defined_subroutines() == 0 ? Origin::Flat : Origin::Rewrite;
    }
    entries.push_back(std::move(*pending));
    pending.reset();
    program_text.clear();
  };
  while (std::getline(in, line)) {
    if (line.rfind("## ", 0) == 0) {
      flush();
      pending = CorpusEntry{};
      std::istringstream words(line.substr(3));
      std::string kv;
      while (words >> kv) {
        try {
          if (kv.rfind("length=", 0) == 0) pending->length = std::stoi(kv.substr(7));
          else if (kv.rfind("steps=", 0) == 0) pending->steps = std::stoi(kv.substr(6));
          else if (kv == "observed") pending->origin = Origin::Observed;
        } catch (const std::exception&) {
          throw ParseError("bad corpus record header: " + line);
        }
      }
    } else if (line.rfind("# ", 0) == 0) {
      std::istringstream words(line.substr(2));
      std::string kv;
      while (words >> kv) {
        try {
          if (kv.rfind("task=", 0) == 0) task_id = kv.substr(5);
          else if (kv.rfind("n=", 0) == 0) expected = std::stoul(kv.substr(2));
        } catch (const std::exception&) {
          throw ParseError("bad corpus header: " + line);
        }
      }
      header = true;
    } else if (!line.empty()) {
      if (!pending) throw ParseError("program text outside a corpus record");
      program_text += line;
      program_text += '\n';
    }
  }
  flush();
  if (!header) throw ParseError("corpus file is missing its header");
  if (entries.size() != expected) {
    throw ParseError("corpus file declares " + std::to_string(expected) + " programs but holds " +
                     std::to_string(entries.size()));
  }
  Corpus corpus(task_id);
  for (auto& e : entries) {
    if (!corpus.add(std::move(e)).second) throw ParseError("duplicate program in corpus file");
  }
  return corpus;
}

}  // namespace hiplan
