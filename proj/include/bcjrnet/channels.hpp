#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcjrnet/rng.hpp"

namespace bcjrnet {

class ChannelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Finite, ordered set of real-valued channel input symbols. The ordering
/// fixes the symbol <-> index mapping used for state digits and class labels.
class Alphabet {
 public:
  explicit Alphabet(std::vector<double> symbols);

  static Alphabet bpsk() { return Alphabet({-1.0, 1.0}); }
  static Alphabet ook() { return Alphabet({0.0, 1.0}); }

  std::size_t size() const { return symbols_.size(); }
  double symbol(std::size_t index) const { return symbols_.at(index); }
  const std::vector<double>& symbols() const { return symbols_; }

  /// Index of an exact symbol value; throws ChannelError if absent.
  std::size_t index_of(double symbol) const;

  bool operator==(const Alphabet&) const = default;

 private:
  std::vector<double> symbols_;
};

struct TapProfile {
  double gamma = 0.0;  // decay exponent the taps were generated from (0 if given explicitly)
  std::vector<double> taps;

  std::size_t memory() const { return taps.size(); }
};

/// h_tau = exp(-gamma * (tau - 1)), tau = 1..memory.
TapProfile decay_profile(double gamma, int memory);

/// Adds independent N(0, sigma_e_sq) noise to every tap. sigma_e_sq == 0 returns the input.
TapProfile perturb_taps(const TapProfile& profile, double sigma_e_sq, std::uint64_t seed);
TapProfile perturb_taps(const TapProfile& profile, double sigma_e_sq, Rng& rng);

/// Trellis state: the window (x_i, ..., x_{i-L+1}) coded as base-|X| digits,
/// most recent symbol in the most significant digit.
struct StateIndex {
  std::size_t value = 0;

  constexpr StateIndex() = default;
  constexpr explicit StateIndex(std::size_t v) : value(v) {}
  auto operator<=>(const StateIndex&) const = default;
};

class StateSpace {
 public:
  StateSpace(Alphabet alphabet, std::size_t memory);

  const Alphabet& alphabet() const { return alphabet_; }
  std::size_t memory() const { return memory_; }
  std::size_t size() const { return size_; }
  std::size_t radix() const { return alphabet_.size(); }

  StateIndex state_of_window(std::span<const double> window) const;
  std::vector<double> window_of_state(StateIndex s) const;

  /// Alphabet index of the digit at `position` (0 = most recent symbol).
  std::size_t digit(StateIndex s, std::size_t position) const;
  std::size_t newest_digit(StateIndex s) const { return s.value / high_place_; }

  /// State reached from `prev` when symbol index `symbol` enters the register.
  StateIndex shift(StateIndex prev, std::size_t symbol) const {
    return StateIndex(symbol * high_place_ + prev.value / radix());
  }
  /// j-th predecessor of `s` (j in [0, |X|)): the state whose oldest digit is j.
  StateIndex predecessor(StateIndex s, std::size_t j) const {
    return StateIndex((s.value % high_place_) * radix() + j);
  }
  /// True iff (s)_j == (prev)_{j-1} for j = 2..L.
  bool is_shift(StateIndex s, StateIndex prev) const { return s.value % high_place_ == prev.value / radix(); }

  bool operator==(const StateSpace& other) const {
    return alphabet_ == other.alphabet_ && memory_ == other.memory_;
  }

 private:
  Alphabet alphabet_;
  std::size_t memory_;
  std::size_t size_;
  std::size_t high_place_;  // |X|^(L-1)
};

/// States s_1..s_n of a block. Symbols before the block are the alphabet's first element.
std::vector<StateIndex> state_sequence(std::span<const double> x_block, const StateSpace& space);
/// Inverse of state_sequence: the newest digit of every state.
std::vector<double> symbols_of_states(std::span<const StateIndex> states, const StateSpace& space);

enum class ChannelFamily { IsiAwgn, Poisson };

std::string to_string(ChannelFamily family);
ChannelFamily parse_channel_family(const std::string& name);

struct ChannelSpec {
  ChannelFamily family = ChannelFamily::IsiAwgn;
  Alphabet alphabet = Alphabet::bpsk();
  TapProfile profile;
  double snr = 1.0;  // linear rho

  ChannelSpec() = default;
  ChannelSpec(ChannelFamily family, Alphabet alphabet, TapProfile profile, double snr);

  /// BPSK for ISI-AWGN, OOK for Poisson.
  static ChannelSpec make(ChannelFamily family, TapProfile profile, double snr);

  StateSpace state_space() const { return StateSpace(alphabet, profile.memory()); }
};

double db_to_linear(double db);

/// sqrt(rho) * sum_tau h_tau x_{i-tau+1} for the window encoded by `s`.
double state_signal(const ChannelSpec& spec, const StateSpace& space, StateIndex s);
/// Poisson rate for a state. The signal part is clipped at zero so that
/// perturbed (possibly negative) taps still describe a valid intensity.
double poisson_rate(const ChannelSpec& spec, const StateSpace& space, StateIndex s);

double normal_pdf(double y, double mean, double variance);
double awgn_likelihood(double y, StateIndex s, const ChannelSpec& spec);
double poisson_pmf(double y, StateIndex s, const ChannelSpec& spec);
double poisson_pmf_at_rate(double y, double rate);
/// Dispatches on the channel family.
double channel_likelihood(double y, StateIndex s, const ChannelSpec& spec);

std::vector<double> sample_block(const ChannelSpec& spec, std::span<const double> x_block, Rng& rng);
std::vector<double> sample_block(const ChannelSpec& spec, std::span<const double> x_block, std::uint64_t seed);

std::vector<double> random_symbols(const Alphabet& alphabet, std::size_t n, Rng& rng);

/// One transmitted block together with its channel output.
struct SymbolBlock {
  std::vector<double> x;
  std::vector<double> y;
};

std::vector<SymbolBlock> simulate_blocks(const ChannelSpec& spec, std::size_t total_symbols,
                                         std::size_t block_length, Rng& rng);

/// (y_i, s_i) training pairs, kept in block order.
struct LabeledDataset {
  std::vector<double> observations;
  std::vector<StateIndex> states;
  std::vector<std::size_t> block_starts;

  std::size_t size() const { return observations.size(); }
};

/// CSV with columns block_id,i,x_i,state_index,y_i (i is 1-based within the block).
void write_dataset_csv(std::ostream& out, std::span<const SymbolBlock> blocks, const StateSpace& space);

}  // namespace bcjrnet
