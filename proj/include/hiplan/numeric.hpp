#pragma once

// Numeric utilities shared by the scoring and fitting code.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace hiplan {

// log(sum(exp(x))) summed in index order; -inf for an empty or all -inf input.
double logsumexp(std::span<const double> x);

// Seed for the named stream `name` under `root`, so every consumer of
// randomness gets an independent, reproducible generator.
std::uint64_t stream_seed(std::uint64_t root, std::string_view name);
std::mt19937_64 named_stream(std::uint64_t root, std::string_view name);

// Uniform on [0, 1) from the top 53 bits; portable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
// Exponential with the given rate (mean 1/rate).
double exponential(std::mt19937_64& rng, double rate);

struct NelderMeadOptions {
  double rel_tolerance = 1e-10;
  int max_iterations = 2000;
  double initial_step = 0.5;
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx = 0;
  int iterations = 0;
  bool converged = false;
};

// Minimizes f from x0 with the standard reflection/expansion/contraction/
// shrink simplex. Stops when |f_worst - f_best| <= rel_tolerance *
// (|f_best| + |f_worst|) / 2 + 1e-300 or after max_iterations. Non-finite
// objective values are treated as +inf.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opt = {});

inline double logit(double p) { return std::log(p / (1 - p)); }
inline double inv_logit(double z) { return 1 / (1 + std::exp(-z)); }

}  // namespace hiplan
