#include "bcjrnet/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "bcjrnet/csv.hpp"

namespace bcjrnet {
namespace {

double log_normal_pdf(double y, double mean, double variance) {
  const double d = y - mean;
  return -0.5 * (d * d / variance + std::log(2.0 * std::numbers::pi * variance));
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double log_density(const GmmParams& p, double y) {
  std::vector<double> terms(p.components());
  for (std::size_t k = 0; k < p.components(); ++k)
    terms[k] = std::log(p.weights[k]) + log_normal_pdf(y, p.means[k], p.variances[k]);
  return log_sum_exp(terms);
}

double density(const GmmParams& p, double y) { return std::exp(log_density(p, y)); }

double log_likelihood(const GmmParams& p, std::span<const double> samples) {
  double ll = 0.0;
  for (double y : samples) ll += log_density(p, y);
  return ll;
}

EmResult em_fit(std::span<const double> samples, std::size_t K, const EmConfig& config) {
  if (K < 1) throw GmmError("mixture needs at least one component");
  if (samples.size() < K) throw GmmError("need at least as many samples as mixture components");
  for (double y : samples)
    if (!std::isfinite(y)) throw GmmError("samples must be finite");
  if (config.max_iterations < 1 || !(config.variance_floor > 0.0))
    throw GmmError("EM needs a positive iteration budget and variance floor");

  const std::size_t N = samples.size();
  const double n = static_cast<double>(N);
  double mean = 0.0;
  for (double y : samples) mean += y;
  mean /= n;
  double var = 0.0;
  for (double y : samples) var += (y - mean) * (y - mean);
  var /= n;

  EmResult r;
  GmmParams& p = r.params;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < K; ++k) {
    const auto q = static_cast<std::size_t>((static_cast<double>(k) + 0.5) / static_cast<double>(K) * n);
    p.weights.push_back(1.0 / static_cast<double>(K));
    p.means.push_back(sorted[std::min(q, N - 1)]);
    p.variances.push_back(std::max(var / static_cast<double>(K), config.variance_floor));
  }

  std::vector<double> resp(N * K);
  std::vector<double> terms(K);
  auto e_step = [&] {
    double ll = 0.0;
    std::vector<double> log_w(K), log_norm(K);
    for (std::size_t k = 0; k < K; ++k) {
      log_w[k] = std::log(p.weights[k]);
      log_norm[k] = -0.5 * std::log(2.0 * std::numbers::pi * p.variances[k]);
    }
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        const double d = samples[i] - p.means[k];
        terms[k] = log_w[k] + log_norm[k] - 0.5 * d * d / p.variances[k];
      }
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t k = 0; k < K; ++k) resp[i * K + k] = std::exp(terms[k] - lse);
    }
    return ll;
  };

  r.log_likelihood.push_back(e_step());
  for (int it = 0; it < config.max_iterations; ++it) {
    for (std::size_t k = 0; k < K; ++k) {
      double nk = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        nk += resp[i * K + k];
        sy += resp[i * K + k] * samples[i];
      }
      p.weights[k] = nk / n;
      if (nk <= std::numeric_limits<double>::min()) continue;  // empty component keeps its location
      const double mu = sy / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < N; ++i) sv += resp[i * K + k] * (samples[i] - mu) * (samples[i] - mu);
      p.means[k] = mu;
      p.variances[k] = sv / nk;
      if (p.variances[k] < config.variance_floor) {
        p.variances[k] = config.variance_floor;
        ++r.floored;
      }
    }
    ++r.iterations;
    const double ll = e_step();
    const double prev = r.log_likelihood.back();
    r.log_likelihood.push_back(ll);
    if (std::abs(ll - prev) <= config.relative_tolerance * std::abs(prev)) {
      r.converged = true;
      break;
    }
  }
  return r;
}

void write_gmm(std::ostream& out, const GmmParams& p) {
  out << "bcjrnet-gmm 1\ncomponents " << p.components() << '\n';
  for (std::size_t k = 0; k < p.components(); ++k)
    out << format_double(p.weights[k]) << ' ' << format_double(p.means[k]) << ' ' << format_double(p.variances[k])
        << '\n';
}

GmmParams read_gmm(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "bcjrnet-gmm" || version != 1) throw GmmError("mixture file: bad header");
  std::size_t K = 0;
  if (!(in >> tag >> K) || tag != "components" || K == 0) throw GmmError("mixture file: bad component count");
  GmmParams p;
  for (std::size_t k = 0; k < K; ++k) {
    double w, m, v;
    if (!(in >> w >> m >> v)) throw GmmError("mixture file: truncated component list");
    if (!(w >= 0.0) || !std::isfinite(m) || !(v > 0.0)) throw GmmError("mixture file: invalid component");
    p.weights.push_back(w);
    p.means.push_back(m);
    p.variances.push_back(v);
  }
  return p;
}

}  // namespace bcjrnet
