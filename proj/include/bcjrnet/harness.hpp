#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcjrnet/channels.hpp"
#include "bcjrnet/config.hpp"
#include "bcjrnet/learned_node.hpp"
#include "bcjrnet/trellis.hpp"
#include "json.hpp"

namespace bcjrnet {

/// Exact per-symbol posteriors by summing the joint over every input sequence
/// (including the L-1 uniformly distributed symbols preceding the block).
/// Works in the log domain; rejects blocks with more than `max_symbols` symbols.
PosteriorTable bruteforce_map_oracle(std::span<const double> y_block, const ChannelSpec& spec,
                                     std::size_t max_symbols = 14);

struct SerCount {
  std::uint64_t errors = 0;
  std::uint64_t trials = 0;
  std::uint64_t failed_blocks = 0;  // detector threw; every symbol of the block counted as an error
  std::uint64_t zero_messages = 0;
};

SerCount count_symbol_errors(const FunctionNode& detector, std::span<const SymbolBlock> blocks);
/// Transmits `test_size` random symbols (blocks of `block_length`) through `truth` and counts MAP errors.
SerCount run_ser_point(const FunctionNode& detector, const ChannelSpec& truth, std::size_t test_size,
                       std::size_t block_length, std::uint64_t seed);

struct SerRecord {
  std::string detector;
  Scenario scenario = Scenario::Perfect;
  double snr_db = 0.0;
  std::optional<double> gamma;  // empty for the per-SNR average over channel draws
  std::uint64_t errors = 0;
  std::uint64_t trials = 0;
  double ser = 0.0;
};

SerRecord make_record(std::string detector, Scenario scenario, double snr_db, std::optional<double> gamma,
                      std::uint64_t errors, std::uint64_t trials);

/// Binomial standard error sqrt(p (1 - p) / trials).
double binomial_se(double p, std::uint64_t trials);

/// Trains one learned node for a channel at the config's sizes. The perfect
/// scenario draws every sample from `truth`; the uncertain one pools
/// `uncertainty.realizations` equally sized sets, each from an independently perturbed copy of the taps.
LearnedNodeTraining train_learned_detector(const ExperimentConfig& cfg, const ChannelSpec& truth, Scenario scenario,
                                           std::uint64_t seed);

/// Records for one (snr, gamma) grid point: every configured detector and scenario.
std::vector<SerRecord> run_sweep_point(const ExperimentConfig& cfg, std::size_t snr_index, std::size_t gamma_index);

struct SweepOptions {
  /// Directory holding manifest.json; empty disables persistence/resume.
  std::filesystem::path manifest_dir;
  std::size_t jobs = 1;
  /// Stop after computing this many new points (0 = no limit). Used to exercise resume.
  std::size_t max_new_points = 0;
  std::function<void(const std::string&)> progress;
};

struct SweepResult {
  std::vector<SerRecord> records;   // per draw, in grid order
  std::vector<SerRecord> averages;  // per (snr, scenario, detector)
  std::size_t computed_points = 0;  // points evaluated by this call (not loaded from the manifest)
  bool complete = false;
};

SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& options = {});

/// Columns: detector,scenario,snr_db,gamma,errors,trials,ser. Average rows carry gamma "avg".
void write_ser_csv(std::ostream& out, std::span<const SerRecord> records);
std::vector<SerRecord> read_ser_csv(std::istream& in);
/// Per-SNR mean and geometric-mean SER over channel draws, per detector and scenario.
nlohmann::json sweep_summary(const ExperimentConfig& cfg, const SweepResult& result);

struct OracleReport {
  std::size_t instances = 0;
  double max_abs_error = 0.0;
  std::size_t worst_length = 0;
};

/// Random instances (n in 1..max_n, gamma in [0.1, 2], family-typical SNR)
/// comparing sum-product with ExactNode against the brute-force oracle.
OracleReport oracle_check(ChannelFamily family, std::size_t instances, std::size_t max_n, int memory,
                          std::uint64_t seed);

}  // namespace bcjrnet
