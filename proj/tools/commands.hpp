#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bcjrnet/config.hpp"
#include "bcjrnet/harness.hpp"

namespace bcjrnet::cli {

/// Entry point shared by the executable and the tests. Exit codes: 0 ok,
/// 1 runtime failure (including oracle mismatch), 2 usage or config error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ObservationBlock {
  std::string block_id;
  std::vector<double> y;
};

/// Observation CSV: a y_i (or y) column, optionally block_id. Rows of one
/// block must be contiguous. Errors carry the offending line number.
std::vector<ObservationBlock> read_observations(std::istream& in);

/// Writes dataset.csv (block_id,i,x_i,state_index,y_i) to the output directory.
std::filesystem::path cmd_simulate(const ExperimentConfig& cfg, std::size_t symbols);
/// Trains a learned node and writes the bundle to <out_dir>/model.
std::filesystem::path cmd_train(const ExperimentConfig& cfg);
/// Detects every block of `input` with a model bundle (if given) or the exact
/// channel from the config. Writes decisions.csv and optionally posteriors.csv.
void cmd_detect(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& model,
                const std::filesystem::path& input, bool write_posteriors);
/// Runs (or resumes) a sweep; writes ser.csv, summary.json and manifest.json.
SweepResult cmd_sweep(const ExperimentConfig& cfg, std::size_t max_new_points, std::ostream& log);
/// Both channel families; returns the largest posterior discrepancy.
double cmd_oracle_check(const ExperimentConfig& cfg, std::size_t instances, std::size_t max_n, std::ostream& out);

}  // namespace bcjrnet::cli
