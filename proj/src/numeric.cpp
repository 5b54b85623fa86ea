#include "hiplan/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hiplan {

double logsumexp(std::span<const double> x) {
  const double inf = std::numeric_limits<double>::infinity();
  double m = -inf;
  for (double v : x) m = std::max(m, v);
  if (m == -inf || std::isnan(m)) return m;
  if (m == inf) return inf;
  double s = 0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(splitmix64(root) ^ fnv1a(name));
}

std::mt19937_64 named_stream(std::uint64_t root, std::string_view name) {
  return std::mt19937_64(stream_seed(root, name));
}

double exponential(std::mt19937_64& rng, double rate) {
  return -std::log1p(-uniform01(rng)) / rate;
}

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opt) {
  const std::size_t n = x0.size();
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  NelderMeadResult out;
  if (n == 0) {
    out.fx = eval(x0);
    out.x = std::move(x0);
    out.converged = true;
    return out;
  }

  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += opt.initial_step;
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);
  std::vector<std::size_t> order(n + 1);

  auto affine = [&](const std::vector<double>& c, const std::vector<double>& w, double t) {
    // c + t (c - w)
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = c[j] + t * (c[j] - w[j]);
    return x;
  };

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const double best = vals[order.front()], worst = vals[order.back()];
    if (std::isfinite(worst) &&
        std::abs(worst - best) <= opt.rel_tolerance * (std::abs(best) + std::abs(worst)) / 2 + 1e-300) {
      out.converged = true;
      break;
    }
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[order[i]][j] / static_cast<double>(n);
    }
    const std::size_t w = order.back();
    const double second_worst = vals[order[n - 1]];

    const auto xr = affine(centroid, pts[w], 1.0);
    const double fr = eval(xr);
    if (fr < best) {
      const auto xe = affine(centroid, pts[w], 2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[w] = xe;
        vals[w] = fe;
      } else {
        pts[w] = xr;
        vals[w] = fr;
      }
      continue;
    }
    if (fr < second_worst) {
      pts[w] = xr;
      vals[w] = fr;
      continue;
    }
    // Contract toward the better of the reflected and worst points.
    const bool outside = fr < vals[w];
    const auto xc = outside ? affine(centroid, pts[w], 0.5) : affine(centroid, pts[w], -0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[w])) {
      pts[w] = xc;
      vals[w] = fc;
      continue;
    }
    const std::size_t b = order.front();
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == b) continue;
      for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[b][j] + 0.5 * (pts[i][j] - pts[b][j]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  out.x = pts[best];
  out.fx = vals[best];
  out.iterations = it;
  return out;
}

}  // namespace hiplan
