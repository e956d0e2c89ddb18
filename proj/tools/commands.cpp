#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>

#include "bcjrnet/csv.hpp"
#include "bcjrnet/exact_node.hpp"
#include "bcjrnet/learned_node.hpp"

namespace bcjrnet::cli {
namespace {

constexpr double kOracleTolerance = 1e-9;

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

}  // namespace

std::vector<ObservationBlock> read_observations(std::istream& in) {
  CsvReader reader(in);
  std::vector<ObservationBlock> blocks;
  if (!reader.has_header()) return blocks;
  const auto& header = reader.header();
  const bool has_yi = std::find(header.begin(), header.end(), "y_i") != header.end();
  const std::size_t c_y = reader.column(has_yi ? "y_i" : "y");
  std::optional<std::size_t> c_block;
  if (std::find(header.begin(), header.end(), "block_id") != header.end()) c_block = reader.column("block_id");

  std::vector<std::string> f;
  while (reader.next(f)) {
    const std::string id = c_block ? f[*c_block] : "0";
    if (id.empty()) throw CsvError(reader.line(), "empty block_id");
    const double y = reader.parse_double(f[c_y]);
    if (blocks.empty() || blocks.back().block_id != id) {
      for (const auto& b : blocks)
        if (b.block_id == id) throw CsvError(reader.line(), "rows of block '" + id + "' are not contiguous");
      blocks.push_back({id, {}});
    }
    blocks.back().y.push_back(y);
  }
  return blocks;
}

std::filesystem::path cmd_simulate(const ExperimentConfig& cfg, std::size_t symbols) {
  const ChannelSpec spec = cfg.channel_spec();
  Rng rng(derive_seed(cfg.seed, {0x53494D}));
  const auto blocks = simulate_blocks(spec, symbols, cfg.data.block_length, rng);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = std::filesystem::path(cfg.out_dir) / "dataset.csv";
  auto f = open_output(path);
  write_dataset_csv(f, blocks, spec.state_space());
  return path;
}

std::filesystem::path cmd_train(const ExperimentConfig& cfg) {
  const ChannelSpec spec = cfg.channel_spec();
  const auto trained = train_learned_detector(cfg, spec, cfg.train_scenario, derive_seed(cfg.seed, {0x545241494E}));

  nlohmann::json meta = {{"family", to_string(cfg.channel.family)},
                         {"snr_db", cfg.snr_db_required()},
                         {"gamma", cfg.channel.gamma},
                         {"seed", cfg.seed},
                         {"scenario", to_string(cfg.train_scenario)},
                         {"config", to_json(cfg)}};
  meta["config"].erase("jobs");
  meta["config"].erase("out_dir");
  nlohmann::json diag = {{"epoch_loss", trained.epoch_loss},
                         {"em_log_likelihood", trained.density_fit.log_likelihood},
                         {"em_iterations", trained.density_fit.iterations},
                         {"em_converged", trained.density_fit.converged},
                         {"em_variance_floor_hits", trained.density_fit.floored}};
  const auto dir = std::filesystem::path(cfg.out_dir) / "model";
  save_bundle(dir, trained.node, meta, diag);
  return dir;
}

void cmd_detect(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& model,
                const std::filesystem::path& input, bool write_posteriors) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open " + input.string());
  const auto blocks = read_observations(in);

  std::unique_ptr<FunctionNode> node;
  if (model)
    node = std::make_unique<LearnedNode>(load_bundle(*model).node);
  else
    node = std::make_unique<ExactNode>(cfg.channel_spec());
  const Alphabet& alphabet = node->state_space().alphabet();

  std::filesystem::create_directories(cfg.out_dir);
  auto dec = open_output(std::filesystem::path(cfg.out_dir) / "decisions.csv");
  dec << "block_id,i,x_hat\n";
  std::ofstream post;
  if (write_posteriors) {
    post = open_output(std::filesystem::path(cfg.out_dir) / "posteriors.csv");
    post << "block_id,k";
    for (double s : alphabet.symbols()) post << ",P(x=" << format_double(s) << ')';
    post << '\n';
  }
  for (const auto& b : blocks) {
    const PosteriorTable table = symbol_posterior(b.y, *node);
    const auto idx = map_decisions(table);
    for (std::size_t k = 0; k < idx.size(); ++k)
      dec << b.block_id << ',' << (k + 1) << ',' << format_double(alphabet.symbol(idx[k])) << '\n';
    if (write_posteriors)
      for (std::size_t k = 0; k < table.rows(); ++k) {
        post << b.block_id << ',' << (k + 1);
        for (double p : table.row(k)) post << ',' << format_double(p);
        post << '\n';
      }
  }
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, std::size_t max_new_points, std::ostream& log) {
  const std::filesystem::path dir(cfg.out_dir);
  SweepOptions opts;
  opts.manifest_dir = dir;
  opts.jobs = cfg.jobs;
  opts.max_new_points = max_new_points;
  opts.progress = [&log](const std::string& msg) { log << msg << std::endl; };
  SweepResult result = run_sweep(cfg, opts);
  if (result.complete) {
    std::vector<SerRecord> rows = result.records;
    rows.insert(rows.end(), result.averages.begin(), result.averages.end());
    auto csv = open_output(dir / "ser.csv");
    write_ser_csv(csv, rows);
    open_output(dir / "summary.json") << sweep_summary(cfg, result).dump(2) << '\n';
  }
  return result;
}

double cmd_oracle_check(const ExperimentConfig& cfg, std::size_t instances, std::size_t max_n, std::ostream& out) {
  double worst = 0.0;
  for (ChannelFamily fam : {ChannelFamily::IsiAwgn, ChannelFamily::Poisson}) {
    const OracleReport rep = oracle_check(fam, instances, max_n, cfg.channel.memory, cfg.seed);
    out << to_string(fam) << ": " << rep.instances << " instances, max abs posterior error "
        << format_double(rep.max_abs_error) << (rep.max_abs_error < kOracleTolerance ? " PASS" : " FAIL") << '\n';
    worst = std::max(worst, rep.max_abs_error);
  }
  return worst;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sum-product symbol detection with exact and learned function nodes"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out_dir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Configuration file (JSON, comments allowed)");
    sub->add_option("--seed", seed, "Master seed (overrides config and BCJRNET_SEED)");
    sub->add_option("--jobs", jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", out_dir, "Output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate a labelled dataset from the configured channel");
  add_common(simulate);
  std::size_t symbols = 1000;
  simulate->add_option("--symbols", symbols, "Number of symbols to simulate")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train a learned function node and save the model bundle");
  add_common(train);

  auto* detect = app.add_subcommand("detect", "MAP-detect observation blocks");
  add_common(detect);
  std::string input, model;
  bool posteriors = false;
  detect->add_option("--input", input, "Observation CSV (columns y_i or y, optional block_id)")->required();
  detect->add_option("--model", model, "Model bundle directory (omit to use the exact channel from --config)");
  detect->add_flag("--posteriors", posteriors, "Also write posteriors.csv");

  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo SER sweep over SNR and channel draws");
  add_common(sweep);
  std::size_t max_points = 0;
  sweep->add_option("--max-points", max_points, "Stop after this many new grid points (resume later)");

  auto* oracle = app.add_subcommand("oracle-check", "Compare sum-product posteriors with exhaustive enumeration");
  add_common(oracle);
  std::size_t instances = 100, max_n = 10;
  oracle->add_option("--instances", instances, "Random instances per channel family");
  oracle->add_option("--max-n", max_n, "Largest block length")->check(CLI::Range(1, 14));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg;
    if (config_path.empty())
      if (const char* env = std::getenv("BCJRNET_CONFIG")) config_path = env;
    if (!config_path.empty()) cfg = load_config(config_path);
    apply_env_overrides(cfg, [](const char* name) { return std::getenv(name); });
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (out_dir) cfg.out_dir = *out_dir;

    if (simulate->parsed()) {
      out << cmd_simulate(cfg, symbols).string() << '\n';
    } else if (train->parsed()) {
      out << cmd_train(cfg).string() << '\n';
    } else if (detect->parsed()) {
      cmd_detect(cfg, model.empty() ? std::nullopt : std::optional<std::filesystem::path>(model), input, posteriors);
    } else if (sweep->parsed()) {
      const auto res = cmd_sweep(cfg, max_points, err);
      out << (res.complete ? "sweep complete: " : "sweep incomplete: ") << res.computed_points
          << " points computed this run\n";
    } else if (oracle->parsed()) {
      if (cmd_oracle_check(cfg, instances, max_n, out) >= kOracleTolerance) return 1;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CsvError& e) {
    err << "error: " << input << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage{"bcjrnet"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace bcjrnet::cli
