#include "hiplan/priors.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "hiplan/error.hpp"
#include "hiplan/numeric.hpp"

namespace hiplan {

void GrammarParams::validate() const {
  if (!(alpha > 0) || !std::isfinite(alpha)) throw DomainError("alpha must be positive");
  if (!(p_call > 0 && p_call < 1)) throw DomainError("p_call must lie in (0, 1)");
  if (!(p_end > 0 && p_end < 1)) throw DomainError("p_end must lie in (0, 1)");
}

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::RandomChoice:
      return "random";
    case ModelKind::StepCost:
      return "step-cost";
    case ModelKind::MDL:
      return "mdl";
    case ModelKind::GrammarInduction:
      return "grammar";
    case ModelKind::MDLStepCost:
      return "mdl+step-cost";
    case ModelKind::GrammarInductionStepCost:
      return "grammar+step-cost";
  }
  return "?";
}

std::optional<ModelKind> model_kind_from_string(std::string_view s) {
  for (ModelKind k : kAllModelKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

bool uses_step_cost(ModelKind k) {
  return k == ModelKind::StepCost || k == ModelKind::MDLStepCost ||
         k == ModelKind::GrammarInductionStepCost;
}
bool uses_mdl(ModelKind k) { return k == ModelKind::MDL || k == ModelKind::MDLStepCost; }
bool uses_grammar(ModelKind k) {
  return k == ModelKind::GrammarInduction || k == ModelKind::GrammarInductionStepCost;
}

void ModelSpec::validate() const {
  if (beta_step_cost < 0 || beta_mdl < 0 || beta_grammar < 0) {
    throw DomainError("prior weights must be nonnegative");
  }
  if (uses_grammar(kind) != grammar.has_value()) {
    throw DomainError(std::string("grammar parameters must be given exactly for grammar models (") +
                      std::string(to_string(kind)) + ")");
  }
  if (grammar) grammar->validate();
}

double step_cost_logprior(const Program& p, const Task& task) {
  const ExecutionResult r = execute(task, p);
  if (!r.solved()) {
    throw NotSolvedError("program does not solve task '" + task.id() + "'");
  }
  return -static_cast<double>(r.steps());
}

double mdl_logprior(const Program& p) { return -static_cast<double>(program_length(p)); }

double dp_call_logprob(const std::vector<int>& counts, int n, DpChoice choice, double alpha) {
  if (choice.is_new) return std::log(alpha / (n + alpha));
  if (choice.k < 0 || choice.k >= static_cast<int>(counts.size()) ||
      counts[static_cast<std::size_t>(choice.k)] < 1) {
    throw DomainError("reuse of subroutine p" + std::to_string(choice.k) + " before any call");
  }
  return std::log(counts[static_cast<std::size_t>(choice.k)] / (n + alpha));
}

namespace {

// Walks the program in the sampler's order: a body is expanded the first time
// it is called. Visitor sees each body, action and call.
template <class OnBody, class OnAction, class OnCall>
void walk_generative(const Program& p, OnBody on_body, OnAction on_action, OnCall on_call) {
  const int n = p.num_bodies();
  std::vector<bool> defined(static_cast<std::size_t>(n), false);
  auto visit = [&](auto&& self, int k) -> void {
    const Body& body = p.body(k);
    if (body.empty()) {
      throw StructureError(k == 0 ? std::string("main is empty")
                                  : "call to p" + std::to_string(k) + " which has no body");
    }
    on_body(body);
    for (Instruction ins : body) {
      if (!ins.is_call()) {
        on_action(ins.action());
        continue;
      }
      const int c = ins.callee();
      const bool fresh = c >= n || !defined[static_cast<std::size_t>(c)];
      if (fresh && (c >= n || p.body(c).empty())) {
        throw StructureError("call to p" + std::to_string(c) + " which has no body");
      }
      on_call(c, fresh);
      if (fresh) {
        defined[static_cast<std::size_t>(c)] = true;
        self(self, c);
      }
    }
  };
  defined[0] = true;
  visit(visit, 0);
  for (int k = 1; k < n; ++k) {
    if (!p.body(k).empty() && !defined[static_cast<std::size_t>(k)]) {
      throw UncalledSubroutineError("p" + std::to_string(k) + " is never called");
    }
  }
}

}  // namespace

double grammar_logprior(const Program& p, const GrammarParams& g) {
  const double log_end = std::log(g.p_end);
  const double log_continue = std::log1p(-g.p_end);
  const double log_action = std::log((1 - g.p_call) / kNumActions);
  const double log_call = std::log(g.p_call);
  std::vector<int> counts(static_cast<std::size_t>(std::max(p.num_bodies(), 1)), 0);
  int n = 0;
  double lp = 0;
  walk_generative(
      p,
      [&](const Body& b) { lp += log_end + static_cast<double>(b.size() - 1) * log_continue; },
      [&](Action) { lp += log_action; },
      [&](int c, bool fresh) {
        lp += log_call + dp_call_logprob(counts, n, fresh ? DpChoice::fresh() : DpChoice::reuse(c),
                                         g.alpha);
        ++counts[static_cast<std::size_t>(c)];
        ++n;
      });
  return lp;
}

GrammarFeatures grammar_features(const Program& p) {
  GrammarFeatures f;
  std::vector<int> uses(static_cast<std::size_t>(std::max(p.num_bodies(), 1)), 0);
  walk_generative(
      p,
      [&](const Body& b) {
        ++f.bodies;
        f.total_length += static_cast<int>(b.size());
      },
      [&](Action) { ++f.actions; },
      [&](int c, bool fresh) {
        ++f.calls;
        if (fresh) ++f.distinct_callees;
        ++uses[static_cast<std::size_t>(c)];
      });
  for (int u : uses) {
    if (u > 1) f.log_reuse_factorials += std::lgamma(static_cast<double>(u));
  }
  return f;
}

double grammar_logprior(const GrammarFeatures& f, const GrammarParams& g) {
  double lp = f.bodies * std::log(g.p_end) + (f.total_length - f.bodies) * std::log1p(-g.p_end);
  lp += f.actions * std::log((1 - g.p_call) / kNumActions);
  if (f.calls > 0) {
    lp += f.calls * std::log(g.p_call) + f.distinct_callees * std::log(g.alpha) +
          f.log_reuse_factorials - (std::lgamma(f.calls + g.alpha) - std::lgamma(g.alpha));
  }
  return lp;
}

Program sample_program(const GrammarParams& g, std::mt19937_64& rng, const SamplerLimits& limits) {
  Program p;
  std::vector<int> counts = {0};  // index 0 (main) is never called
  int n = 0;
  std::size_t instructions = 0;

  auto subroutine = [&](auto&& self, int k) -> void {
    Body body;
    do {
      if (++instructions > limits.max_instructions) {
        throw BudgetError("sampled program exceeds " + std::to_string(limits.max_instructions) +
                          " instructions");
      }
      if (uniform01(rng) < g.p_call) {
        double r = uniform01(rng) * (n + g.alpha);
        int chosen = 0;
        for (std::size_t c = 1; c < counts.size(); ++c) {
          if (r < counts[c]) {
            chosen = static_cast<int>(c);
            break;
          }
          r -= counts[c];
        }
        ++n;
        if (chosen == 0) {
          chosen = static_cast<int>(counts.size());
          counts.push_back(1);
          // Defined before its body is drawn, so the body may call itself.
          p.mutable_body(chosen);
          self(self, chosen);
        } else {
          ++counts[static_cast<std::size_t>(chosen)];
        }
        body.push_back(Instruction::call(chosen));
      } else {
        const auto a = std::min<std::size_t>(static_cast<std::size_t>(uniform01(rng) * kNumActions),
                                             kNumActions - 1);
        body.push_back(Instruction::action(kAllActions[a]));
      }
    } while (!(uniform01(rng) < g.p_end));
    p.mutable_body(k) = std::move(body);
  };
  subroutine(subroutine, 0);
  return p;
}

Program sample_program(const GrammarParams& g, std::uint64_t seed, const SamplerLimits& limits) {
  std::mt19937_64 rng(seed);
  return sample_program(g, rng, limits);
}

ProgramFeatures program_features(const Program& p, const Task& task) {
  ProgramFeatures f;
  f.steps = static_cast<int>(-step_cost_logprior(p, task));
  f.length = program_length(p);
  f.grammar = grammar_features(p);
  return f;
}

double model_logscore(const ProgramFeatures& f, const ModelSpec& m) {
  double s = 0;
  if (uses_step_cost(m.kind)) s += m.beta_step_cost * -static_cast<double>(f.steps);
  if (uses_mdl(m.kind)) s += m.beta_mdl * -static_cast<double>(f.length);
  if (uses_grammar(m.kind)) {
    if (!m.grammar) throw DomainError("grammar model without grammar parameters");
    s += m.beta_grammar * grammar_logprior(f.grammar, *m.grammar);
  }
  return s;
}

double model_logscore(const Program& p, const Task& task, const ModelSpec& m) {
  double s = 0;
  if (uses_step_cost(m.kind)) s += m.beta_step_cost * step_cost_logprior(p, task);
  if (uses_mdl(m.kind)) s += m.beta_mdl * mdl_logprior(p);
  if (uses_grammar(m.kind)) {
    if (!m.grammar) throw DomainError("grammar model without grammar parameters");
    s += m.beta_grammar * grammar_logprior(p, *m.grammar);
  }
  return s;
}

PosteriorTable posterior_over_features(const std::vector<ProgramFeatures>& features,
                                       const ModelSpec& m) {
  if (features.empty()) throw EmptyCorpusError("posterior over an empty corpus");
  PosteriorTable t;
  t.log_scores.reserve(features.size());
  for (const auto& f : features) t.log_scores.push_back(model_logscore(f, m));
  t.log_normalizer = logsumexp(t.log_scores);
  t.probabilities.reserve(features.size());
  for (double s : t.log_scores) t.probabilities.push_back(std::exp(s - t.log_normalizer));
  return t;
}

PosteriorTable posterior_over_corpus(const Corpus& corpus, const ModelSpec& m) {
  if (corpus.empty()) {
    throw EmptyCorpusError("corpus for task '" + corpus.task_id() + "' is empty");
  }
  std::vector<ProgramFeatures> features;
  features.reserve(corpus.size());
  for (const auto& e : corpus.entries()) {
    features.push_back(ProgramFeatures{e.steps, e.length, grammar_features(e.program)});
  }
  return posterior_over_features(features, m);
}

std::string program_hash(const Program& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_program(p)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string score_csv(const Corpus& corpus, const std::vector<NamedModel>& models) {
  std::vector<PosteriorTable> tables;
  for (const auto& m : models) tables.push_back(posterior_over_corpus(corpus, m.spec));
  std::ostringstream os;
  os << "task,program_hash,length,steps";
  for (const auto& m : models) os << ',' << m.name << "_logscore," << m.name << "_posterior";
  os << '\n';
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& e = corpus.entries()[i];
    os << corpus.task_id() << ',' << program_hash(e.program) << ',' << e.length << ',' << e.steps;
    for (const auto& t : tables) os << ',' << shortest(t.log_scores[i]) << ',' << shortest(t.probabilities[i]);
    os << '\n';
  }
  return os.str();
}

}  // namespace hiplan
