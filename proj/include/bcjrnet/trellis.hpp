#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "bcjrnet/channels.hpp"

namespace bcjrnet {

/// Normalized message over trellis states. The unnormalized message equals
/// values * exp(log_scale).
struct Message {
  std::vector<double> values;
  double log_scale = 0.0;
};

/// Function-node backend: supplies P(y | s). The engine multiplies in the
/// shift kernel, so node_value() is zero on shift-inconsistent pairs for every backend.
class FunctionNode {
 public:
  virtual ~FunctionNode() = default;

  virtual const StateSpace& state_space() const = 0;
  virtual double likelihood(double y, StateIndex s) const = 0;

  /// Row-major n x |S| table of likelihoods for a whole block. Backends with a
  /// cheaper batched evaluation override this.
  virtual void likelihood_table(std::span<const double> y_block, std::span<double> out) const;

  double node_value(double y, StateIndex s, StateIndex s_prev) const;
};

/// 1/|X| when `s` is a one-symbol shift of `s_prev`, else 0.
double transition_kernel(StateIndex s, StateIndex s_prev, const StateSpace& space);

class ZeroMessageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ZeroMessagePolicy { SubstituteUniform, Fail };

struct EngineOptions {
  ZeroMessagePolicy zero_policy = ZeroMessagePolicy::SubstituteUniform;
};

struct EngineStats {
  std::size_t kernel_evaluations = 0;
  std::size_t zero_messages = 0;
};

/// Per-symbol posteriors, row k = P(X_k = . | y).
struct PosteriorTable {
  std::size_t symbols = 0;
  std::vector<double> values;  // rows() x symbols, row-major

  std::size_t rows() const { return symbols == 0 ? 0 : values.size() / symbols; }
  double at(std::size_t k, std::size_t x) const { return values[k * symbols + x]; }
  std::span<const double> row(std::size_t k) const { return {values.data() + k * symbols, symbols}; }
};

/// Square |S| x |S| matrix indexed (s_k, s_{k+1}).
struct StatePairMatrix {
  std::size_t states = 0;
  std::vector<double> values;

  double at(std::size_t a, std::size_t b) const { return values[a * states + b]; }
};

/// Chain-structured sum-product over one block. Likelihoods are evaluated once
/// and shared by the forward recursion, backward recursion and the marginals.
/// Initial and terminal messages are uniform.
class SumProduct {
 public:
  SumProduct(std::span<const double> y_block, const FunctionNode& node, EngineOptions options = {});

  std::size_t length() const { return n_; }
  const StateSpace& state_space() const { return space_; }

  /// n + 1 messages; entry i is proportional to P(s_i, y_1..y_i), entry 0 is the uniform prior.
  const std::vector<Message>& forward() const { return forward_; }
  /// n + 1 messages; entry i is proportional to P(y_{i+1}..y_n | s_i), entry n is uniform.
  const std::vector<Message>& backward() const { return backward_; }

  /// Normalized joint of (s_k, s_{k+1}) given y, for 1 <= k < n.
  StatePairMatrix pairwise_joint(std::size_t k) const;
  PosteriorTable symbol_posterior() const;
  /// Natural log of P(y_1..y_n) under the backend (uniform initial state).
  double log_evidence() const { return forward_.back().log_scale; }

  const EngineStats& stats() const { return stats_; }

 private:
  double likelihood_at(std::size_t i, StateIndex s) const { return table_[(i - 1) * space_.size() + s.value]; }
  void normalize(Message& m, double base_log_scale);
  void run_forward();
  void run_backward();

  StateSpace space_;
  std::size_t n_;
  EngineOptions options_;
  std::vector<double> table_;
  std::vector<Message> forward_;
  std::vector<Message> backward_;
  mutable EngineStats stats_;
};

std::vector<Message> forward_pass(std::span<const double> y_block, const FunctionNode& node,
                                  EngineOptions options = {});
std::vector<Message> backward_pass(std::span<const double> y_block, const FunctionNode& node,
                                   EngineOptions options = {});
StatePairMatrix pairwise_joint(std::size_t k, std::span<const double> y_block, const FunctionNode& node);
PosteriorTable symbol_posterior(std::span<const double> y_block, const FunctionNode& node,
                                EngineOptions options = {});

/// Argmax of every posterior row; ties go to the lowest alphabet index.
std::vector<std::size_t> map_decisions(const PosteriorTable& posterior);
std::vector<double> map_detect(std::span<const double> y_block, const FunctionNode& node,
                               EngineOptions options = {});

/// CSV with columns k,P(x=<symbol>)... (k is 1-based).
void write_posterior_csv(std::ostream& out, const PosteriorTable& posterior, const Alphabet& alphabet);

}  // namespace bcjrnet
