#include "bcjrnet/trellis.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "bcjrnet/csv.hpp"

namespace bcjrnet {

void FunctionNode::likelihood_table(std::span<const double> y_block, std::span<double> out) const {
  const std::size_t S = state_space().size();
  for (std::size_t i = 0; i < y_block.size(); ++i)
    for (std::size_t s = 0; s < S; ++s) out[i * S + s] = likelihood(y_block[i], StateIndex(s));
}

double FunctionNode::node_value(double y, StateIndex s, StateIndex s_prev) const {
  const double k = transition_kernel(s, s_prev, state_space());
  return k == 0.0 ? 0.0 : likelihood(y, s) * k;
}

double transition_kernel(StateIndex s, StateIndex s_prev, const StateSpace& space) {
  return space.is_shift(s, s_prev) ? 1.0 / static_cast<double>(space.radix()) : 0.0;
}

SumProduct::SumProduct(std::span<const double> y_block, const FunctionNode& node, EngineOptions options)
    : space_(node.state_space()), n_(y_block.size()), options_(options), table_(n_ * space_.size()) {
  node.likelihood_table(y_block, table_);
  run_forward();
  run_backward();
}

void SumProduct::normalize(Message& m, double base_log_scale) {
  double sum = 0.0;
  for (double v : m.values) sum += v;
  if (sum > 0.0 && std::isfinite(sum)) {
    for (double& v : m.values) v /= sum;
    m.log_scale = base_log_scale + std::log(sum);
    return;
  }
  if (options_.zero_policy == ZeroMessagePolicy::Fail)
    throw ZeroMessageError("message vanished (all node values zero or non-finite)");
  ++stats_.zero_messages;
  const double u = 1.0 / static_cast<double>(m.values.size());
  for (double& v : m.values) v = u;
  m.log_scale = -INFINITY;
}

void SumProduct::run_forward() {
  const std::size_t S = space_.size();
  forward_.assign(n_ + 1, Message{std::vector<double>(S, 1.0 / static_cast<double>(S)), 0.0});
  for (std::size_t i = 1; i <= n_; ++i) {
    const Message& prev = forward_[i - 1];
    Message& cur = forward_[i];
    for (std::size_t s = 0; s < S; ++s) {
      const StateIndex si(s);
      const double lik = likelihood_at(i, si);
      double acc = 0.0;
      for (std::size_t j = 0; j < space_.radix(); ++j) {
        const StateIndex p = space_.predecessor(si, j);
        acc += lik * transition_kernel(si, p, space_) * prev.values[p.value];
        ++stats_.kernel_evaluations;
      }
      cur.values[s] = acc;
    }
    normalize(cur, prev.log_scale);
  }
}

void SumProduct::run_backward() {
  const std::size_t S = space_.size();
  backward_.assign(n_ + 1, Message{std::vector<double>(S, 1.0 / static_cast<double>(S)),
                                   std::log(static_cast<double>(S))});
  for (std::size_t i = n_; i-- > 0;) {
    const Message& next = backward_[i + 1];
    Message& cur = backward_[i];
    for (std::size_t p = 0; p < S; ++p) {
      const StateIndex pi(p);
      double acc = 0.0;
      for (std::size_t x = 0; x < space_.radix(); ++x) {
        const StateIndex s = space_.shift(pi, x);
        acc += likelihood_at(i + 1, s) * transition_kernel(s, pi, space_) * next.values[s.value];
        ++stats_.kernel_evaluations;
      }
      cur.values[p] = acc;
    }
    normalize(cur, next.log_scale);
  }
}

StatePairMatrix SumProduct::pairwise_joint(std::size_t k) const {
  if (k < 1 || k >= n_) throw std::out_of_range("pairwise_joint index must satisfy 1 <= k < n");
  const std::size_t S = space_.size();
  StatePairMatrix m{S, std::vector<double>(S * S, 0.0)};
  double total = 0.0;
  for (std::size_t a = 0; a < S; ++a) {
    for (std::size_t b = 0; b < S; ++b) {
      const double kernel = transition_kernel(StateIndex(b), StateIndex(a), space_);
      if (kernel == 0.0) continue;
      const double v =
          forward_[k].values[a] * likelihood_at(k + 1, StateIndex(b)) * kernel * backward_[k + 1].values[b];
      m.values[a * S + b] = v;
      total += v;
    }
  }
  if (total > 0.0 && std::isfinite(total))
    for (double& v : m.values) v /= total;
  return m;
}

PosteriorTable SumProduct::symbol_posterior() const {
  const std::size_t S = space_.size();
  const std::size_t X = space_.radix();
  PosteriorTable table{X, std::vector<double>(n_ * X, 0.0)};
  std::vector<double> acc(X);
  for (std::size_t k = 1; k <= n_; ++k) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < S; ++p) {
      const double a = forward_[k - 1].values[p];
      if (a == 0.0) continue;
      for (std::size_t x = 0; x < X; ++x) {
        const StateIndex s = space_.shift(StateIndex(p), x);
        acc[x] += a * likelihood_at(k, s) * transition_kernel(s, StateIndex(p), space_) * backward_[k].values[s.value];
      }
    }
    double total = 0.0;
    for (double v : acc) total += v;
    double* row = table.values.data() + (k - 1) * X;
    if (total > 0.0 && std::isfinite(total)) {
      for (std::size_t x = 0; x < X; ++x) row[x] = acc[x] / total;
    } else {
      if (options_.zero_policy == ZeroMessagePolicy::Fail)
        throw ZeroMessageError("symbol posterior vanished at index " + std::to_string(k));
      ++stats_.zero_messages;
      for (std::size_t x = 0; x < X; ++x) row[x] = 1.0 / static_cast<double>(X);
    }
  }
  return table;
}

std::vector<Message> forward_pass(std::span<const double> y_block, const FunctionNode& node, EngineOptions options) {
  return SumProduct(y_block, node, options).forward();
}

std::vector<Message> backward_pass(std::span<const double> y_block, const FunctionNode& node, EngineOptions options) {
  return SumProduct(y_block, node, options).backward();
}

StatePairMatrix pairwise_joint(std::size_t k, std::span<const double> y_block, const FunctionNode& node) {
  return SumProduct(y_block, node).pairwise_joint(k);
}

PosteriorTable symbol_posterior(std::span<const double> y_block, const FunctionNode& node, EngineOptions options) {
  return SumProduct(y_block, node, options).symbol_posterior();
}

std::vector<std::size_t> map_decisions(const PosteriorTable& posterior) {
  std::vector<std::size_t> out(posterior.rows());
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::size_t best = 0;
    for (std::size_t x = 1; x < posterior.symbols; ++x)
      if (posterior.at(k, x) > posterior.at(k, best)) best = x;
    out[k] = best;
  }
  return out;
}

std::vector<double> map_detect(std::span<const double> y_block, const FunctionNode& node, EngineOptions options) {
  const auto idx = map_decisions(symbol_posterior(y_block, node, options));
  std::vector<double> x(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) x[k] = node.state_space().alphabet().symbol(idx[k]);
  return x;
}

void write_posterior_csv(std::ostream& out, const PosteriorTable& posterior, const Alphabet& alphabet) {
  out << 'k';
  for (double s : alphabet.symbols()) out << ",P(x=" << format_double(s) << ')';
  out << '\n';
  for (std::size_t k = 0; k < posterior.rows(); ++k) {
    out << (k + 1);
    for (double p : posterior.row(k)) out << ',' << format_double(p);
    out << '\n';
  }
}

}  // namespace bcjrnet
