#include "hiplan/fitting.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/special_functions/gamma.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <thread>
#include <tuple>

#include "hiplan/canonicalize.hpp"
#include "hiplan/error.hpp"

namespace hiplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string record_label(std::size_t i, const Observation& o) {
  return "record " + std::to_string(i + 1) + " (participant '" + o.participant + "', task '" +
         o.task + "')";
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Dataset parse_dataset(std::string_view jsonl) {
  Dataset d;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "dataset line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      Observation o;
      o.participant = j.at("participant").get<std::string>();
      o.task = j.at("task").get<std::string>();
      o.program = program_from_json(j.at("program"));
      if (j.contains("rt_seconds") && !j["rt_seconds"].is_null()) {
        o.rt_seconds = j["rt_seconds"].get<double>();
      }
      if (j.contains("n_evals") && !j["n_evals"].is_null()) o.n_evals = j["n_evals"].get<int>();
      d.records.push_back(std::move(o));
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + e.what());
    }
  }
  return d;
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read dataset file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_dataset(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string write_dataset(const Dataset& d) {
  std::string out;
  for (const Observation& o : d.records) {
    nlohmann::ordered_json j;
    j["participant"] = o.participant;
    j["task"] = o.task;
    j["program"] = program_to_json(o.program);
    j["rt_seconds"] = o.rt_seconds ? nlohmann::ordered_json(*o.rt_seconds) : nlohmann::ordered_json();
    j["n_evals"] = o.n_evals ? nlohmann::ordered_json(*o.n_evals) : nlohmann::ordered_json();
    out += j.dump();
    out += '\n';
  }
  return out;
}

TaskLikelihood task_likelihood(const Corpus& corpus,
                               const std::vector<std::pair<std::size_t, int>>& observed) {
  TaskLikelihood t;
  t.task_id = corpus.task_id();
  using Key = std::tuple<int, int, int, int, int, int, int, double>;
  std::map<Key, std::size_t> index;
  std::vector<double> mult;
  for (const CorpusEntry& e : corpus.entries()) {
    const GrammarFeatures g = grammar_features(e.program);
    const Key key{e.steps,   e.length,  g.bodies,           g.total_length,
                  g.actions, g.calls,   g.distinct_callees, g.log_reuse_factorials};
    auto [it, added] = index.emplace(key, t.classes.size());
    if (added) {
      t.classes.push_back(FeatureClass{ProgramFeatures{e.steps, e.length, g}, 0});
      mult.push_back(0);
    }
    mult[it->second] += 1;
    t.entry_class.push_back(it->second);
  }
  for (std::size_t c = 0; c < t.classes.size(); ++c) t.classes[c].log_multiplicity = std::log(mult[c]);
  t.observed = observed;
  for (const auto& [entry, count] : observed) {
    if (entry >= corpus.size()) throw MissingProgramError("observed program outside the corpus");
    t.total += count;
  }
  return t;
}

FitData prepare_fit_data(const Dataset& data, const std::map<std::string, Task>& tasks,
                         std::map<std::string, Corpus>& corpora, UnionStats* stats,
                         bool allow_union) {
  UnionStats local;
  std::map<std::string, std::map<std::size_t, int>> counts;
  std::map<std::string, std::size_t> seen_keys;  // "task\nprogram" -> first record
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const Observation& o = data.records[i];
    ++local.records;
    const auto task_it = tasks.find(o.task);
    const auto corpus_it = corpora.find(o.task);
    if (task_it == tasks.end() || corpus_it == corpora.end()) {
      throw MissingProgramError(record_label(i, o) + ": no task or corpus with that id");
    }
    Program canonical;
    try {
      canonical = canonicalize(task_it->second, o.program).program;
    } catch (const NotSolvedError& e) {
      throw ValidationError(record_label(i, o) + ": " + e.what());
    }
    Corpus& corpus = corpus_it->second;
    std::optional<std::size_t> idx = corpus.find(canonical);
    const bool first_time = seen_keys.emplace(o.task + "\n" + serialize_program(canonical), i).second;
    if (first_time) {
      ++local.distinct;
      if (idx) ++local.found;
    }
    if (!idx) {
      if (!allow_union) {
        throw MissingProgramError(record_label(i, o) + ": program is not in the corpus");
      }
      idx = union_observed(corpus, task_it->second, canonical).first;
      ++local.unioned;
    }
    ++counts[o.task][*idx];
  }
  FitData fd;
  for (const auto& [task_id, by_entry] : counts) {
    std::vector<std::pair<std::size_t, int>> observed(by_entry.begin(), by_entry.end());
    fd.tasks.push_back(task_likelihood(corpora.at(task_id), observed));
    fd.n += fd.tasks.back().total;
  }
  if (stats) *stats = local;
  return fd;
}

namespace {

// Log-space constants for one parameter setting.
struct Scorer {
  double bsc = 0, bmdl = 0, bgi = 0;
  bool grammar = false;
  double lpe = 0, l1pe = 0, la = 0, lpc = 0, lalpha = 0, lgalpha = 0, alpha = 1;
  mutable std::vector<double> lg;  // lgamma(c + alpha) - lgamma(alpha)

  Scorer(const ModelSpec& m, double p_end) {
    if (uses_step_cost(m.kind)) bsc = m.beta_step_cost;
    if (uses_mdl(m.kind)) bmdl = m.beta_mdl;
    if (uses_grammar(m.kind)) {
      if (!m.grammar) throw DomainError("grammar model without grammar parameters");
      grammar = true;
      bgi = m.beta_grammar;
      alpha = m.grammar->alpha;
      lpe = std::log(p_end);
      l1pe = std::log1p(-p_end);
      la = std::log((1 - m.grammar->p_call) / kNumActions);
      lpc = std::log(m.grammar->p_call);
      lalpha = std::log(alpha);
      lgalpha = std::lgamma(alpha);
    }
  }

  double dp_norm(int calls) const {
    const auto c = static_cast<std::size_t>(calls);
    if (c >= lg.size()) {
      const std::size_t old = lg.size();
      lg.resize(c + 1);
      for (std::size_t i = old; i <= c; ++i) lg[i] = std::lgamma(static_cast<double>(i) + alpha) - lgalpha;
    }
    return lg[c];
  }

  double operator()(const ProgramFeatures& f) const {
    double s = -bsc * f.steps - bmdl * f.length;
    if (grammar) {
      const GrammarFeatures& g = f.grammar;
      double gi = g.bodies * lpe + (g.total_length - g.bodies) * l1pe + g.actions * la;
      if (g.calls > 0) {
        gi += g.calls * lpc + g.distinct_callees * lalpha + g.log_reuse_factorials - dp_norm(g.calls);
      }
      s += bgi * gi;
    }
    return s;
  }
};

// Log normalizer and per-class scores (without multiplicity).
double log_normalizer(const TaskLikelihood& t, const Scorer& sc, std::vector<double>& scores) {
  scores.resize(t.classes.size());
  double mx = -kInf;
  for (std::size_t c = 0; c < t.classes.size(); ++c) {
    scores[c] = sc(t.classes[c].features);
    mx = std::max(mx, scores[c] + t.classes[c].log_multiplicity);
  }
  if (!std::isfinite(mx)) return mx;
  double sum = 0;
  for (std::size_t c = 0; c < t.classes.size(); ++c) {
    sum += std::exp(scores[c] + t.classes[c].log_multiplicity - mx);
  }
  return mx + std::log(sum);
}

double task_loglik(const TaskLikelihood& t, const Scorer& sc) {
  thread_local std::vector<double> scores;
  const double z = log_normalizer(t, sc, scores);
  double ll = 0;
  for (const auto& [entry, count] : t.observed) ll += count * (scores[t.entry_class[entry]] - z);
  return ll;
}

std::vector<double> softmax_weights(const std::vector<double>& logw) {
  const double z = logsumexp(logw);
  std::vector<double> w(logw.size(), 0.0);
  if (!std::isfinite(z)) return w;
  for (std::size_t i = 0; i < logw.size(); ++i) w[i] = std::exp(logw[i] - z);
  return w;
}

}  // namespace

LoglikDetail dataset_loglik_detail(const FitData& data, const ModelSpec& m,
                                   const std::vector<double>& pend_grid) {
  LoglikDetail d;
  d.per_task.assign(data.tasks.size(), 0.0);
  if (!uses_grammar(m.kind)) {
    const Scorer sc(m, 0.5);
    for (std::size_t i = 0; i < data.tasks.size(); ++i) {
      d.per_task[i] = task_loglik(data.tasks[i], sc);
      d.total += d.per_task[i];
    }
    return d;
  }
  if (pend_grid.empty()) throw DomainError("empty p_end grid");
  std::vector<std::vector<double>> per(pend_grid.size());
  for (std::size_t g = 0; g < pend_grid.size(); ++g) {
    const Scorer sc(m, pend_grid[g]);
    double total = 0;
    for (const TaskLikelihood& t : data.tasks) {
      per[g].push_back(task_loglik(t, sc));
      total += per[g].back();
    }
    d.grid.push_back(total);
  }
  d.total = logsumexp(d.grid) - std::log(static_cast<double>(pend_grid.size()));
  const std::vector<double> w = softmax_weights(d.grid);
  for (std::size_t i = 0; i < data.tasks.size(); ++i) {
    double v = 0;
    for (std::size_t g = 0; g < pend_grid.size(); ++g) {
      if (w[g] > 0) v += w[g] * per[g][i];
    }
    d.per_task[i] = std::isfinite(d.total) ? v : -kInf;
  }
  return d;
}

double dataset_loglik(const FitData& data, const ModelSpec& m, const std::vector<double>& pend_grid) {
  return dataset_loglik_detail(data, m, pend_grid).total;
}

std::vector<double> class_posterior(const TaskLikelihood& t, const ModelSpec& m) {
  const Scorer sc(m, m.grammar ? m.grammar->p_end : 0.5);
  std::vector<double> scores;
  const double z = log_normalizer(t, sc, scores);
  std::vector<double> p(t.classes.size());
  for (std::size_t c = 0; c < p.size(); ++c) {
    p[c] = std::exp(scores[c] + t.classes[c].log_multiplicity - z);
  }
  return p;
}

std::vector<double> marginal_class_posterior(const FitData& data, std::size_t task,
                                             const ModelSpec& m,
                                             const std::vector<double>& pend_grid) {
  if (!uses_grammar(m.kind)) return class_posterior(data.tasks.at(task), m);
  const LoglikDetail d = dataset_loglik_detail(data, m, pend_grid);
  const std::vector<double> w = softmax_weights(d.grid);
  std::vector<double> mix(data.tasks.at(task).classes.size(), 0.0);
  for (std::size_t g = 0; g < pend_grid.size(); ++g) {
    if (w[g] == 0) continue;
    ModelSpec at = m;
    at.grammar->p_end = pend_grid[g];
    const std::vector<double> p = class_posterior(data.tasks[task], at);
    for (std::size_t c = 0; c < mix.size(); ++c) mix[c] += w[g] * p[c];
  }
  return mix;
}

int parameter_count(ModelKind k) { return static_cast<int>(parameter_names(k).size()); }

std::vector<std::string> parameter_names(ModelKind k) {
  switch (k) {
    case ModelKind::RandomChoice:
      return {};
    case ModelKind::StepCost:
      return {"beta_StepCost"};
    case ModelKind::MDL:
      return {"beta_MDL"};
    case ModelKind::GrammarInduction:
      return {"alpha", "beta_GrammarInduction", "p_call"};
    case ModelKind::MDLStepCost:
      return {"beta_MDL", "beta_StepCost"};
    case ModelKind::GrammarInductionStepCost:
      return {"alpha", "beta_GrammarInduction", "p_call", "beta_StepCost"};
  }
  return {};
}

namespace {

bool is_probability(const std::string& name) { return name == "p_call"; }

// Box on the log/logit coordinates. Beyond it the objective is flat, so a
// parameter drifting toward 0 or infinity no longer stalls the simplex.
constexpr double kCoordinateBound = 25.0;

ModelSpec decode(ModelKind kind, const std::vector<double>& x) {
  ModelSpec m;
  m.kind = kind;
  const auto names = parameter_names(kind);
  if (uses_grammar(kind)) m.grammar = GrammarParams{};
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& n = names[i];
    const double z = std::clamp(x[i], -kCoordinateBound, kCoordinateBound);
    const double v = is_probability(n) ? inv_logit(z) : std::exp(z);
    if (n == "beta_StepCost") m.beta_step_cost = v;
    else if (n == "beta_MDL") m.beta_mdl = v;
    else if (n == "beta_GrammarInduction") m.beta_grammar = v;
    else if (n == "alpha") m.grammar->alpha = v;
    else if (n == "p_call") m.grammar->p_call = v;
  }
  return m;
}

std::vector<double> parameter_values(const ModelSpec& m) {
  std::vector<double> out;
  for (const std::string& n : parameter_names(m.kind)) {
    if (n == "beta_StepCost") out.push_back(m.beta_step_cost);
    else if (n == "beta_MDL") out.push_back(m.beta_mdl);
    else if (n == "beta_GrammarInduction") out.push_back(m.beta_grammar);
    else if (n == "alpha") out.push_back(m.grammar->alpha);
    else if (n == "p_call") out.push_back(m.grammar->p_call);
  }
  return out;
}

}  // namespace

FitResult fit_model(ModelKind kind, const FitData& data, const FitOptions& opt) {
  FitResult r;
  r.k = parameter_count(kind);
  r.n = data.n;
  if (r.k == 0) {
    r.model.kind = kind;
    r.loglik = dataset_loglik(data, r.model, opt.pend_grid);
    if (!std::isfinite(r.loglik)) throw OptimizationError("random-choice likelihood is not finite");
    r.bic = bic(r.loglik, 0, r.n);
    return r;
  }
  const auto names = parameter_names(kind);
  const int restarts = std::max(opt.restarts, 1);
  std::vector<NelderMeadResult> results(static_cast<std::size_t>(restarts));

  auto run = [&](int i) {
    std::vector<double> x0(names.size(), 0.0);
    if (i > 0) {
      std::mt19937_64 rng = named_stream(opt.seed, "fit/restart/" + std::to_string(i));
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (is_probability(names[j])) {
          x0[j] = logit(std::clamp(uniform01(rng), 1e-12, 1 - 1e-12));
        } else {
          x0[j] = std::log(std::max(exponential(rng, 2.0), 1e-300));
        }
      }
    }
    auto objective = [&](const std::vector<double>& x) {
      return -dataset_loglik(data, decode(kind, x), opt.pend_grid);
    };
    // A fresh simplex at the converged point guards against early collapse
    // along flat directions (weights near zero in log coordinates).
    NelderMeadResult res = nelder_mead(objective, x0, opt.simplex);
    for (int polish = 0; polish < 5 && res.converged && std::isfinite(res.fx); ++polish) {
      NelderMeadResult again = nelder_mead(objective, res.x, opt.simplex);
      const bool better = again.fx < res.fx;
      const double gain = res.fx - again.fx;
      if (better) {
        again.iterations += res.iterations;
        res = std::move(again);
      }
      if (!better || gain <= opt.simplex.rel_tolerance * std::abs(res.fx)) break;
    }
    results[static_cast<std::size_t>(i)] = std::move(res);
  };

  const int jobs = std::clamp(opt.jobs, 1, restarts);
  if (jobs == 1) {
    for (int i = 0; i < restarts; ++i) run(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < restarts; i = next++) run(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  r.restarts_run = restarts;
  for (int i = 0; i < restarts; ++i) {
    const NelderMeadResult& res = results[static_cast<std::size_t>(i)];
    const double ll = std::isfinite(res.fx) ? -res.fx : -kInf;
    r.restart_logliks.push_back(ll);
    if (std::isfinite(ll) && (r.best_restart < 0 || ll > r.loglik)) {
      r.best_restart = i;
      r.loglik = ll;
    }
  }
  if (r.best_restart < 0) {
    throw OptimizationError(std::string("no restart of ") + std::string(to_string(kind)) +
                            " reached a finite likelihood");
  }
  r.model = decode(kind, results[static_cast<std::size_t>(r.best_restart)].x);
  if (uses_grammar(kind)) {
    const LoglikDetail d = dataset_loglik_detail(data, r.model, opt.pend_grid);
    const auto best = std::max_element(d.grid.begin(), d.grid.end()) - d.grid.begin();
    r.p_end_mode = opt.pend_grid[static_cast<std::size_t>(best)];
    r.model.grammar->p_end = *r.p_end_mode;
  }
  r.bic = bic(r.loglik, r.k, r.n);
  return r;
}

double bic(double loglik, int k, int n) { return k * std::log(static_cast<double>(n)) - 2 * loglik; }

double chi_square_upper_tail(double stat, int df) {
  if (df < 1) throw DomainError("chi-square needs df >= 1");
  if (!(stat > 0)) return 1.0;
  return boost::math::gamma_q(df / 2.0, stat / 2.0);
}

LrTest lr_test(double loglik_null, double loglik_alt, int df) {
  LrTest t;
  t.stat = std::max(0.0, 2 * (loglik_alt - loglik_null));
  t.p = chi_square_upper_tail(t.stat, df);
  return t;
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) {
    throw SupportMismatchError("distributions have " + std::to_string(p.size()) + " and " +
                               std::to_string(q.size()) + " outcomes");
  }
  double js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return js;
}

std::vector<TaskVariability> variability_report(const FitData& data,
                                                const std::optional<ModelSpec>& grammar,
                                                const std::optional<ModelSpec>& step_cost,
                                                const std::vector<double>& pend_grid) {
  std::vector<TaskVariability> out;
  for (std::size_t i = 0; i < data.tasks.size(); ++i) {
    const TaskLikelihood& t = data.tasks[i];
    TaskVariability v;
    v.task_id = t.task_id;
    v.observations = t.total;
    v.unique_programs = static_cast<int>(t.observed.size());
    for (const auto& [entry, count] : t.observed) v.modal_count = std::max(v.modal_count, count);
    v.modal_share = t.total ? static_cast<double>(v.modal_count) / t.total : 0.0;
    if (grammar && step_cost) {
      v.js_grammar_step_cost = js_divergence(marginal_class_posterior(data, i, *grammar, pend_grid),
                                             marginal_class_posterior(data, i, *step_cost, pend_grid));
    }
    out.push_back(std::move(v));
  }
  return out;
}

Dataset simulate_dataset(const std::map<std::string, Corpus>& corpora, const ModelSpec& m, int draws,
                         std::mt19937_64& rng) {
  struct Sampler {
    const Corpus* corpus;
    std::vector<double> cdf;
  };
  std::vector<Sampler> samplers;
  for (const auto& [id, corpus] : corpora) {
    if (corpus.empty()) continue;
    std::vector<double> scores;
    for (const CorpusEntry& e : corpus.entries()) {
      scores.push_back(model_logscore(
          ProgramFeatures{e.steps, e.length, grammar_features(e.program)}, m));
    }
    const double z = logsumexp(scores);
    Sampler s{&corpus, {}};
    double acc = 0;
    for (double sc : scores) {
      acc += std::exp(sc - z);
      s.cdf.push_back(acc);
    }
    samplers.push_back(std::move(s));
  }
  if (samplers.empty()) throw EmptyCorpusError("no corpus to simulate from");
  Dataset d;
  for (int i = 0; i < draws; ++i) {
    const Sampler& s = samplers[static_cast<std::size_t>(i) % samplers.size()];
    const double u = uniform01(rng) * s.cdf.back();
    const auto pos = static_cast<std::size_t>(std::upper_bound(s.cdf.begin(), s.cdf.end(), u) -
                                              s.cdf.begin());
    const std::size_t idx = std::min(pos, s.cdf.size() - 1);
    d.records.push_back(Observation{"sim-" + std::to_string(i), s.corpus->task_id(),
                                    s.corpus->entries()[idx].program, std::nullopt, std::nullopt});
  }
  return d;
}

std::string fit_report_csv(const std::vector<FitResult>& fits) {
  std::ostringstream os;
  os << "model,loglik,bic,k,parameters\n";
  for (const FitResult& f : fits) {
    os << to_string(f.model.kind) << ',' << format_number(f.loglik) << ',' << format_number(f.bic)
       << ',' << f.k << ',';
    const auto names = parameter_names(f.model.kind);
    const auto values = parameter_values(f.model);
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) os << ' ';
      os << names[i] << '=' << format_number(values[i]);
    }
    // marginalized, not fitted; the grid mode is listed for reference
    if (f.p_end_mode) os << " p_end=" << format_number(*f.p_end_mode);
    os << '\n';
  }
  return os.str();
}

std::string task_bic_csv(const FitData& data, const std::vector<FitResult>& fits,
                         const std::vector<double>& pend_grid) {
  std::vector<LoglikDetail> details;
  for (const FitResult& f : fits) details.push_back(dataset_loglik_detail(data, f.model, pend_grid));
  std::ostringstream os;
  os << "task";
  for (const FitResult& f : fits) os << ',' << to_string(f.model.kind);
  os << '\n';
  for (std::size_t i = 0; i < data.tasks.size(); ++i) {
    os << data.tasks[i].task_id;
    for (const LoglikDetail& d : details) os << ',' << format_number(-2 * d.per_task[i]);
    os << '\n';
  }
  os << "(p_end marginalization)";
  for (const LoglikDetail& d : details) {
    double sum = 0;
    for (double v : d.per_task) sum += v;
    os << ',' << format_number(-2 * (d.total - sum));
  }
  os << "\n(parameters)";
  for (const FitResult& f : fits) os << ',' << format_number(f.k * std::log(static_cast<double>(data.n)));
  os << "\n(total)";
  for (const FitResult& f : fits) os << ',' << format_number(f.bic);
  os << '\n';
  return os.str();
}

std::string variability_csv(const std::vector<TaskVariability>& rows) {
  std::ostringstream os;
  os << "task,observations,unique_programs,modal_count,modal_share,js_grammar_step_cost\n";
  for (const TaskVariability& v : rows) {
    os << v.task_id << ',' << v.observations << ',' << v.unique_programs << ',' << v.modal_count
       << ',' << format_number(v.modal_share) << ','
       << (v.js_grammar_step_cost ? format_number(*v.js_grammar_step_cost) : std::string()) << '\n';
  }
  return os.str();
}

}  // namespace hiplan
