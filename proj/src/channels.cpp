#include "bcjrnet/channels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "bcjrnet/csv.hpp"

namespace bcjrnet {

Alphabet::Alphabet(std::vector<double> symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty()) throw ChannelError("alphabet must not be empty");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!std::isfinite(symbols_[i])) throw ChannelError("alphabet symbols must be finite");
    for (std::size_t j = 0; j < i; ++j)
      if (symbols_[i] == symbols_[j]) throw ChannelError("alphabet symbols must be distinct");
  }
}

std::size_t Alphabet::index_of(double symbol) const {
  auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  if (it == symbols_.end()) throw ChannelError("symbol " + format_double(symbol) + " is not in the alphabet");
  return static_cast<std::size_t>(it - symbols_.begin());
}

TapProfile decay_profile(double gamma, int memory) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ChannelError("decay exponent gamma must be positive");
  if (memory < 1) throw ChannelError("channel memory must be at least 1");
  TapProfile p{gamma, {}};
  p.taps.reserve(static_cast<std::size_t>(memory));
  for (int tau = 1; tau <= memory; ++tau) p.taps.push_back(std::exp(-gamma * (tau - 1)));
  return p;
}

TapProfile perturb_taps(const TapProfile& profile, double sigma_e_sq, Rng& rng) {
  if (!(sigma_e_sq >= 0.0)) throw ChannelError("tap perturbation variance must be non-negative");
  if (sigma_e_sq == 0.0) return profile;
  TapProfile out = profile;
  const double sd = std::sqrt(sigma_e_sq);
  for (double& h : out.taps) h += rng.normal(0.0, sd);
  return out;
}

TapProfile perturb_taps(const TapProfile& profile, double sigma_e_sq, std::uint64_t seed) {
  Rng rng(seed);
  return perturb_taps(profile, sigma_e_sq, rng);
}

StateSpace::StateSpace(Alphabet alphabet, std::size_t memory)
    : alphabet_(std::move(alphabet)), memory_(memory), size_(1), high_place_(1) {
  if (memory_ < 1) throw ChannelError("channel memory must be at least 1");
  for (std::size_t j = 0; j < memory_; ++j) {
    if (size_ > (std::size_t{1} << 40) / radix()) throw ChannelError("state space too large");
    size_ *= radix();
  }
  high_place_ = size_ / radix();
}

StateIndex StateSpace::state_of_window(std::span<const double> window) const {
  if (window.size() != memory_) throw ChannelError("state window length must equal the channel memory");
  std::size_t v = 0;
  for (double x : window) v = v * radix() + alphabet_.index_of(x);
  return StateIndex(v);
}

std::vector<double> StateSpace::window_of_state(StateIndex s) const {
  std::vector<double> w(memory_);
  std::size_t v = s.value;
  for (std::size_t j = memory_; j-- > 0;) {
    w[j] = alphabet_.symbol(v % radix());
    v /= radix();
  }
  return w;
}

std::size_t StateSpace::digit(StateIndex s, std::size_t position) const {
  std::size_t v = s.value;
  for (std::size_t j = position + 1; j < memory_; ++j) v /= radix();
  return v % radix();
}

std::vector<StateIndex> state_sequence(std::span<const double> x_block, const StateSpace& space) {
  std::vector<StateIndex> states;
  states.reserve(x_block.size());
  StateIndex s(0);  // all-pad register
  for (double x : x_block) {
    s = space.shift(s, space.alphabet().index_of(x));
    states.push_back(s);
  }
  return states;
}

std::vector<double> symbols_of_states(std::span<const StateIndex> states, const StateSpace& space) {
  std::vector<double> x;
  x.reserve(states.size());
  for (StateIndex s : states) x.push_back(space.alphabet().symbol(space.newest_digit(s)));
  return x;
}

std::string to_string(ChannelFamily family) {
  return family == ChannelFamily::IsiAwgn ? "isi_awgn" : "poisson";
}

ChannelFamily parse_channel_family(const std::string& name) {
  if (name == "isi_awgn") return ChannelFamily::IsiAwgn;
  if (name == "poisson") return ChannelFamily::Poisson;
  throw ChannelError("unknown channel family '" + name + "' (expected isi_awgn or poisson)");
}

ChannelSpec::ChannelSpec(ChannelFamily family_, Alphabet alphabet_, TapProfile profile_, double snr_)
    : family(family_), alphabet(std::move(alphabet_)), profile(std::move(profile_)), snr(snr_) {
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ChannelError("snr must be positive");
  if (profile.taps.empty()) throw ChannelError("tap profile must have at least one tap");
}

ChannelSpec ChannelSpec::make(ChannelFamily family, TapProfile profile, double snr) {
  return ChannelSpec(family, family == ChannelFamily::IsiAwgn ? Alphabet::bpsk() : Alphabet::ook(),
                     std::move(profile), snr);
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double state_signal(const ChannelSpec& spec, const StateSpace& space, StateIndex s) {
  double acc = 0.0;
  for (std::size_t tau = 0; tau < spec.profile.memory(); ++tau)
    acc += spec.profile.taps[tau] * space.alphabet().symbol(space.digit(s, tau));
  return std::sqrt(spec.snr) * acc;
}

double poisson_rate(const ChannelSpec& spec, const StateSpace& space, StateIndex s) {
  return std::max(state_signal(spec, space, s), 0.0) + 1.0;
}

double normal_pdf(double y, double mean, double variance) {
  const double d = y - mean;
  return std::exp(-0.5 * d * d / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

double awgn_likelihood(double y, StateIndex s, const ChannelSpec& spec) {
  if (spec.family != ChannelFamily::IsiAwgn) throw ChannelError("awgn_likelihood requires an ISI-AWGN channel");
  const StateSpace space = spec.state_space();
  return normal_pdf(y, state_signal(spec, space, s), 1.0);
}

double poisson_pmf_at_rate(double y, double rate) {
  if (!(y >= 0.0) || std::floor(y) != y) throw ChannelError("Poisson observation must be a non-negative integer");
  return std::exp(y * std::log(rate) - rate - std::lgamma(y + 1.0));
}

double poisson_pmf(double y, StateIndex s, const ChannelSpec& spec) {
  if (spec.family != ChannelFamily::Poisson) throw ChannelError("poisson_pmf requires a Poisson channel");
  const StateSpace space = spec.state_space();
  return poisson_pmf_at_rate(y, poisson_rate(spec, space, s));
}

double channel_likelihood(double y, StateIndex s, const ChannelSpec& spec) {
  return spec.family == ChannelFamily::IsiAwgn ? awgn_likelihood(y, s, spec) : poisson_pmf(y, s, spec);
}

std::vector<double> sample_block(const ChannelSpec& spec, std::span<const double> x_block, Rng& rng) {
  const StateSpace space = spec.state_space();
  std::vector<double> signal(space.size());
  for (std::size_t s = 0; s < space.size(); ++s)
    signal[s] = spec.family == ChannelFamily::IsiAwgn ? state_signal(spec, space, StateIndex(s))
                                                      : poisson_rate(spec, space, StateIndex(s));
  std::vector<double> y;
  y.reserve(x_block.size());
  for (StateIndex s : state_sequence(x_block, space)) {
    if (spec.family == ChannelFamily::IsiAwgn)
      y.push_back(signal[s.value] + rng.normal());
    else
      y.push_back(static_cast<double>(rng.poisson(signal[s.value])));
  }
  return y;
}

std::vector<double> sample_block(const ChannelSpec& spec, std::span<const double> x_block, std::uint64_t seed) {
  Rng rng(seed);
  return sample_block(spec, x_block, rng);
}

std::vector<double> random_symbols(const Alphabet& alphabet, std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = alphabet.symbol(rng.index(alphabet.size()));
  return x;
}

std::vector<SymbolBlock> simulate_blocks(const ChannelSpec& spec, std::size_t total_symbols,
                                         std::size_t block_length, Rng& rng) {
  if (block_length == 0) throw ChannelError("block length must be positive");
  std::vector<SymbolBlock> blocks;
  for (std::size_t done = 0; done < total_symbols; done += block_length) {
    const std::size_t n = std::min(block_length, total_symbols - done);
    SymbolBlock b;
    b.x = random_symbols(spec.alphabet, n, rng);
    b.y = sample_block(spec, b.x, rng);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

void write_dataset_csv(std::ostream& out, std::span<const SymbolBlock> blocks, const StateSpace& space) {
  out << "block_id,i,x_i,state_index,y_i\n";
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto states = state_sequence(blocks[b].x, space);
    for (std::size_t i = 0; i < blocks[b].x.size(); ++i)
      out << b << ',' << (i + 1) << ',' << format_double(blocks[b].x[i]) << ',' << states[i].value << ','
          << format_double(blocks[b].y[i]) << '\n';
  }
}

}  // namespace bcjrnet
