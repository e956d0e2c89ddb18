#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace bcjrnet {

/// One-dimensional Gaussian mixture.
struct GmmParams {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t components() const { return weights.size(); }
  bool operator==(const GmmParams&) const = default;
};

struct EmConfig {
  int max_iterations = 500;
  double relative_tolerance = 1e-8;
  double variance_floor = 1e-6;
};

struct EmResult {
  GmmParams params;
  /// Log-likelihood of the initial parameters followed by the value after every M-step;
  /// the last entry belongs to the returned parameters.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  /// Number of (iteration, component) variance updates that hit the floor.
  std::size_t floored = 0;
};

class GmmError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Expectation-maximization. Initial means sit at the (k + 1/2)/K sample
/// quantiles, variances at sample variance / K, weights uniform.
EmResult em_fit(std::span<const double> samples, std::size_t components, const EmConfig& config = {});

double density(const GmmParams& params, double y);
double log_density(const GmmParams& params, double y);
double log_likelihood(const GmmParams& params, std::span<const double> samples);

void write_gmm(std::ostream& out, const GmmParams& params);
GmmParams read_gmm(std::istream& in);

}  // namespace bcjrnet
