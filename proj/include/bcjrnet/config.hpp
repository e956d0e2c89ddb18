#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcjrnet/channels.hpp"
#include "bcjrnet/gmm.hpp"
#include "bcjrnet/mlp.hpp"
#include "json.hpp"

namespace bcjrnet {

/// Invalid or missing configuration value; `field()` is the dotted path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Scenario { Perfect, Uncertain };
std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

struct ChannelSection {
  ChannelFamily family = ChannelFamily::IsiAwgn;
  int memory = 2;
  double gamma = 0.5;
  std::optional<double> snr_db;  // required by train / simulate / exact detection
};

struct DataSection {
  std::size_t train_samples = 10000;
  std::size_t test_samples = 50000;
  std::size_t block_length = 1000;
};

struct UncertaintySection {
  std::optional<double> sigma_e_sq;  // defaults by family: 0.1 ISI-AWGN, 0.08 Poisson
  std::size_t realizations = 10;
};

struct SweepSection {
  std::optional<std::vector<double>> snr_db;  // defaults by family
  std::size_t gamma_count = 20;
  double gamma_min = 0.1;
  double gamma_max = 2.0;
  std::vector<std::string> detectors{"exact", "bcjrnet"};
  std::vector<Scenario> scenarios{Scenario::Perfect, Scenario::Uncertain};
};

/// Everything a run needs. Every field has a default except channel.snr_db.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string out_dir = "out";
  ChannelSection channel;
  DataSection data;
  TrainConfig classifier;  // its seed is derived from `seed` per model
  AdamState adam;
  EmConfig mixture;
  std::size_t mixture_components = 0;  // 0 = |X|^L
  Scenario train_scenario = Scenario::Perfect;
  UncertaintySection uncertainty;
  SweepSection sweep;

  double sigma_e_sq() const;
  std::vector<double> snr_grid_db() const;
  std::vector<double> gamma_grid() const;
  /// Requires channel.snr_db.
  ChannelSpec channel_spec() const;
  double snr_db_required() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
/// Accepts // and /* */ comments.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

/// Hash of the settings that affect results (everything but jobs and out_dir).
std::string config_hash(const ExperimentConfig& c);

/// Overrides from BCJRNET_SEED, BCJRNET_JOBS and BCJRNET_OUT_DIR.
void apply_env_overrides(ExperimentConfig& c, const std::function<const char*(const char*)>& getenv_fn);

}  // namespace bcjrnet
