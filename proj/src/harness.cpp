#include "bcjrnet/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include "bcjrnet/csv.hpp"
#include "bcjrnet/exact_node.hpp"

namespace bcjrnet {
namespace {

constexpr const char* kVersion = "1.0.0";

double log_channel_likelihood(double y, double param, ChannelFamily family) {
  if (family == ChannelFamily::IsiAwgn) {
    const double d = y - param;
    return -0.5 * d * d - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return y * std::log(param) - param - std::lgamma(y + 1.0);
}

std::string point_key(std::size_t snr_index, std::size_t gamma_index) {
  return "snr" + std::to_string(snr_index) + "_gamma" + std::to_string(gamma_index);
}

nlohmann::json record_to_json(const SerRecord& r) {
  return {{"detector", r.detector},
          {"scenario", to_string(r.scenario)},
          {"snr_db", r.snr_db},
          {"gamma", r.gamma ? nlohmann::json(*r.gamma) : nlohmann::json(nullptr)},
          {"errors", r.errors},
          {"trials", r.trials}};
}

SerRecord record_from_json(const nlohmann::json& j) {
  std::optional<double> gamma;
  if (!j.at("gamma").is_null()) gamma = j.at("gamma").get<double>();
  return make_record(j.at("detector").get<std::string>(), parse_scenario(j.at("scenario").get<std::string>()),
                     j.at("snr_db").get<double>(), gamma, j.at("errors").get<std::uint64_t>(),
                     j.at("trials").get<std::uint64_t>());
}

void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

PosteriorTable bruteforce_map_oracle(std::span<const double> y_block, const ChannelSpec& spec,
                                     std::size_t max_symbols) {
  const std::size_t n = y_block.size();
  if (n > max_symbols) throw std::invalid_argument("block too long for exhaustive enumeration");
  const StateSpace space = spec.state_space();
  const std::size_t X = space.radix();
  const std::size_t L = space.memory();
  const std::size_t total_symbols = n + L - 1;  // L-1 symbols before the block, then x_1..x_n

  std::vector<double> param(space.size());
  for (std::size_t s = 0; s < space.size(); ++s)
    param[s] = spec.family == ChannelFamily::IsiAwgn ? state_signal(spec, space, StateIndex(s))
                                                     : poisson_rate(spec, space, StateIndex(s));
  std::vector<double> log_lik(n * space.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.family == ChannelFamily::Poisson) poisson_pmf_at_rate(y_block[i], 1.0);  // validates y
    for (std::size_t s = 0; s < space.size(); ++s)
      log_lik[i * space.size() + s] = log_channel_likelihood(y_block[i], param[s], spec.family);
  }

  std::size_t sequences = 1;
  for (std::size_t k = 0; k < total_symbols; ++k) sequences *= X;

  std::vector<double> log_joint(sequences);
  std::vector<std::size_t> digits(total_symbols);
  for (std::size_t q = 0; q < sequences; ++q) {
    std::size_t v = q;
    for (std::size_t k = 0; k < total_symbols; ++k) {
      digits[k] = v % X;
      v /= X;
    }
    double lj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // State at symbol i (0-based within the block): newest digit is digits[i + L - 1].
      std::size_t s = 0;
      for (std::size_t j = 0; j < L; ++j) s = s * X + digits[i + L - 1 - j];
      lj += log_lik[i * space.size() + s];
    }
    log_joint[q] = lj;
  }
  const double peak = n == 0 ? 0.0 : *std::max_element(log_joint.begin(), log_joint.end());

  PosteriorTable table{X, std::vector<double>(n * X, 0.0)};
  double total = 0.0;
  for (std::size_t q = 0; q < sequences; ++q) {
    const double w = std::exp(log_joint[q] - peak);
    total += w;
    std::size_t v = q;
    for (std::size_t k = 0; k < total_symbols; ++k) {
      if (k >= L - 1) table.values[(k - (L - 1)) * X + v % X] += w;
      v /= X;
    }
  }
  for (double& p : table.values) p /= total;
  return table;
}

SerCount count_symbol_errors(const FunctionNode& detector, std::span<const SymbolBlock> blocks) {
  const Alphabet& alphabet = detector.state_space().alphabet();
  SerCount c;
  for (const SymbolBlock& b : blocks) {
    c.trials += b.x.size();
    try {
      SumProduct sp(b.y, detector);
      const auto decisions = map_decisions(sp.symbol_posterior());
      for (std::size_t k = 0; k < decisions.size(); ++k)
        if (alphabet.symbol(decisions[k]) != b.x[k]) ++c.errors;
      c.zero_messages += sp.stats().zero_messages;
    } catch (const std::exception&) {
      ++c.failed_blocks;
      c.errors += b.x.size();
    }
  }
  return c;
}

SerCount run_ser_point(const FunctionNode& detector, const ChannelSpec& truth, std::size_t test_size,
                       std::size_t block_length, std::uint64_t seed) {
  Rng rng(seed);
  const auto blocks = simulate_blocks(truth, test_size, block_length, rng);
  return count_symbol_errors(detector, blocks);
}

SerRecord make_record(std::string detector, Scenario scenario, double snr_db, std::optional<double> gamma,
                      std::uint64_t errors, std::uint64_t trials) {
  if (errors > trials) throw std::invalid_argument("error count exceeds trial count");
  SerRecord r{std::move(detector), scenario, snr_db, gamma, errors, trials, 0.0};
  r.ser = trials == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(trials);
  return r;
}

double binomial_se(double p, std::uint64_t trials) {
  return trials == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

LearnedNodeTraining train_learned_detector(const ExperimentConfig& cfg, const ChannelSpec& truth, Scenario scenario,
                                           std::uint64_t seed) {
  std::vector<SymbolBlock> blocks;
  if (scenario == Scenario::Perfect) {
    Rng rng(derive_seed(seed, {1}));
    blocks = simulate_blocks(truth, cfg.data.train_samples, cfg.data.block_length, rng);
  } else {
    const std::size_t R = cfg.uncertainty.realizations;
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t share = cfg.data.train_samples / R + (r < cfg.data.train_samples % R ? 1 : 0);
      if (share == 0) continue;
      ChannelSpec noisy = truth;
      noisy.profile = perturb_taps(truth.profile, cfg.sigma_e_sq(), derive_seed(seed, {2, r}));
      Rng rng(derive_seed(seed, {3, r}));
      auto part = simulate_blocks(noisy, share, cfg.data.block_length, rng);
      blocks.insert(blocks.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
  }
  TrainConfig tc = cfg.classifier;
  tc.seed = derive_seed(seed, {4});
  return train_bcjrnet(build_training_set(blocks, truth.state_space()), truth.state_space(), tc, cfg.adam,
                       cfg.mixture, cfg.mixture_components);
}

std::vector<SerRecord> run_sweep_point(const ExperimentConfig& cfg, std::size_t snr_index, std::size_t gamma_index) {
  const double snr_db = cfg.snr_grid_db().at(snr_index);
  const double gamma = cfg.gamma_grid().at(gamma_index);
  const ChannelSpec truth =
      ChannelSpec::make(cfg.channel.family, decay_profile(gamma, cfg.channel.memory), db_to_linear(snr_db));
  const std::uint64_t point_seed =
      derive_seed(cfg.seed, {static_cast<std::uint64_t>(cfg.channel.family), snr_index, gamma_index});

  // All detectors see the same test blocks.
  Rng test_rng(derive_seed(point_seed, {10}));
  const auto test_blocks = simulate_blocks(truth, cfg.data.test_samples, cfg.data.block_length, test_rng);

  std::vector<SerRecord> out;
  for (Scenario scenario : cfg.sweep.scenarios) {
    for (const std::string& det : cfg.sweep.detectors) {
      SerCount c;
      if (det == "exact") {
        ChannelSpec assumed = truth;
        if (scenario == Scenario::Uncertain)
          assumed.profile = perturb_taps(truth.profile, cfg.sigma_e_sq(), derive_seed(point_seed, {11}));
        c = count_symbol_errors(ExactNode(assumed), test_blocks);
      } else {
        const auto trained = train_learned_detector(cfg, truth, scenario,
                                                    derive_seed(point_seed, {12, static_cast<std::uint64_t>(scenario)}));
        c = count_symbol_errors(trained.node, test_blocks);
      }
      out.push_back(make_record(det, scenario, snr_db, gamma, c.errors, c.trials));
    }
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& options) {
  const auto snrs = cfg.snr_grid_db();
  const auto gammas = cfg.gamma_grid();
  const std::string hash = config_hash(cfg);

  std::map<std::string, std::vector<SerRecord>> done;
  nlohmann::json manifest;
  const bool persist = !options.manifest_dir.empty();
  const auto manifest_path = options.manifest_dir / "manifest.json";
  if (persist) {
    std::filesystem::create_directories(options.manifest_dir);
    if (std::filesystem::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      manifest = nlohmann::json::parse(in);
      if (manifest.value("config_hash", "") != hash)
        throw std::runtime_error("manifest in " + options.manifest_dir.string() +
                                 " was written for a different configuration");
      for (auto& [key, point] : manifest.at("points").items()) {
        if (point.value("status", "") != "complete") continue;
        for (const auto& r : point.at("records")) done[key].push_back(record_from_json(r));
      }
    } else {
      nlohmann::json settings = to_json(cfg);
      settings.erase("jobs");
      settings.erase("out_dir");
      manifest = {{"format_version", 1},
                  {"config_hash", hash},
                  {"master_seed", cfg.seed},
                  {"module_versions", {{"bcjrnet", kVersion}}},
                  {"outputs", {{"records", "ser.csv"}, {"summary", "summary.json"}}},
                  {"config", settings},
                  {"points", nlohmann::json::object()}};
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> pending;
  for (std::size_t si = 0; si < snrs.size(); ++si)
    for (std::size_t gi = 0; gi < gammas.size(); ++gi)
      if (!done.count(point_key(si, gi))) pending.emplace_back(si, gi);
  if (options.max_new_points > 0 && pending.size() > options.max_new_points) pending.resize(options.max_new_points);

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= pending.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const auto [si, gi] = pending[idx];
      try {
        auto records = run_sweep_point(cfg, si, gi);
        std::lock_guard lock(mu);
        const std::string key = point_key(si, gi);
        if (persist) {
          nlohmann::json rs = nlohmann::json::array();
          for (const auto& r : records) rs.push_back(record_to_json(r));
          manifest["points"][key] = {{"status", "complete"}, {"records", rs}};
          write_file_atomically(manifest_path, manifest.dump(1) + "\n");
        }
        done[key] = std::move(records);
        if (options.progress)
          options.progress("point " + key + " (snr " + format_double(snrs[si]) + " dB, gamma " +
                           format_double(gammas[gi]) + ") done");
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.jobs, pending.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  result.computed_points = pending.size();
  result.complete = true;
  for (std::size_t si = 0; si < snrs.size(); ++si)
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
      auto it = done.find(point_key(si, gi));
      if (it == done.end()) {
        result.complete = false;
        continue;
      }
      result.records.insert(result.records.end(), it->second.begin(), it->second.end());
    }
  if (!result.complete) return result;

  for (std::size_t si = 0; si < snrs.size(); ++si)
    for (Scenario sc : cfg.sweep.scenarios)
      for (const auto& det : cfg.sweep.detectors) {
        std::uint64_t errors = 0, trials = 0;
        for (const auto& r : result.records)
          if (r.snr_db == snrs[si] && r.scenario == sc && r.detector == det) {
            errors += r.errors;
            trials += r.trials;
          }
        result.averages.push_back(make_record(det, sc, snrs[si], std::nullopt, errors, trials));
      }
  return result;
}

void write_ser_csv(std::ostream& out, std::span<const SerRecord> records) {
  out << "detector,scenario,snr_db,gamma,errors,trials,ser\n";
  for (const auto& r : records)
    out << r.detector << ',' << to_string(r.scenario) << ',' << format_double(r.snr_db) << ','
        << (r.gamma ? format_double(*r.gamma) : "avg") << ',' << r.errors << ',' << r.trials << ','
        << format_double(r.ser) << '\n';
}

std::vector<SerRecord> read_ser_csv(std::istream& in) {
  CsvReader reader(in);
  std::vector<SerRecord> out;
  if (!reader.has_header()) return out;
  const std::size_t c_det = reader.column("detector"), c_sc = reader.column("scenario"),
                    c_snr = reader.column("snr_db"), c_g = reader.column("gamma"), c_e = reader.column("errors"),
                    c_t = reader.column("trials");
  std::vector<std::string> f;
  while (reader.next(f)) {
    std::optional<double> gamma;
    if (f[c_g] != "avg") gamma = reader.parse_double(f[c_g]);
    Scenario sc;
    try {
      sc = parse_scenario(f[c_sc]);
    } catch (const std::exception& e) {
      throw CsvError(reader.line(), e.what());
    }
    const long long e = reader.parse_int(f[c_e]), t = reader.parse_int(f[c_t]);
    if (e < 0 || t < 0 || e > t) throw CsvError(reader.line(), "inconsistent error/trial counts");
    out.push_back(make_record(f[c_det], sc, reader.parse_double(f[c_snr]), gamma, static_cast<std::uint64_t>(e),
                              static_cast<std::uint64_t>(t)));
  }
  return out;
}

nlohmann::json sweep_summary(const ExperimentConfig& cfg, const SweepResult& result) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& avg : result.averages) {
    double log_sum = 0.0;
    std::size_t draws = 0;
    for (const auto& r : result.records)
      if (r.snr_db == avg.snr_db && r.scenario == avg.scenario && r.detector == avg.detector) {
        // Zero-error draws enter the geometric mean at half an error.
        log_sum += std::log(std::max(r.ser, 0.5 / static_cast<double>(r.trials)));
        ++draws;
      }
    points.push_back({{"detector", avg.detector},
                      {"scenario", to_string(avg.scenario)},
                      {"snr_db", avg.snr_db},
                      {"mean_ser", avg.ser},
                      {"geomean_ser", draws ? std::exp(log_sum / static_cast<double>(draws)) : 0.0},
                      {"errors", avg.errors},
                      {"trials", avg.trials},
                      {"draws", draws}});
  }
  return {{"family", to_string(cfg.channel.family)},
          {"config_hash", config_hash(cfg)},
          {"complete", result.complete},
          {"points", points}};
}

OracleReport oracle_check(ChannelFamily family, std::size_t instances, std::size_t max_n, int memory,
                          std::uint64_t seed) {
  OracleReport rep;
  for (std::size_t t = 0; t < instances; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(family), t}));
    const std::size_t n = 1 + rng.index(max_n);
    const double gamma = rng.uniform(0.1, 2.0);
    const double snr_db = family == ChannelFamily::IsiAwgn ? rng.uniform(-2.0, 12.0) : rng.uniform(10.0, 34.0);
    const ChannelSpec spec = ChannelSpec::make(family, decay_profile(gamma, memory), db_to_linear(snr_db));
    const auto x = random_symbols(spec.alphabet, n, rng);
    const auto y = sample_block(spec, x, rng);
    const auto engine = symbol_posterior(y, ExactNode(spec));
    const auto oracle = bruteforce_map_oracle(y, spec);
    for (std::size_t i = 0; i < engine.values.size(); ++i) {
      const double err = std::abs(engine.values[i] - oracle.values[i]);
      if (err > rep.max_abs_error) {
        rep.max_abs_error = err;
        rep.worst_length = n;
      }
    }
    ++rep.instances;
  }
  return rep;
}

}  // namespace bcjrnet
